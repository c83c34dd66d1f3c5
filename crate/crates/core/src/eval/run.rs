use rand::Rng;

use super::protocol::excerpt_starts;
use super::report::{EvalReport, Granularity, ReportRow, ShiftCurve};
use super::{DistortionCase, DistortionKind, EvalError, EvalProtocol, MissingTrackPolicy, SHIFT_REFERENCE};
use crate::augment::replica::{cut_padded, fit_length, uniform};
use crate::augment::{add_noise_at_snr, apply_reverb, colored_noise, loop_to_length, time_stretch, Corpora};
use crate::dsp::{segment_count, AudioBuffer, Featurizer};
use crate::encoder::Model;
use crate::index::{FingerprintDb, MatchRank};
use crate::par::{self, Execution};
use crate::rng::{derive_indexed, derive_seed, rng_for, rng_from_seed};

pub struct EvalInputs<'a> {
    pub db: &'a FingerprintDb,
    pub model: &'a Model<f32>,
    pub featurizer: &'a Featurizer,
    /// Query tracks, normally the same tracks the database was built from.
    pub tracks: &'a [(String, AudioBuffer)],
    pub corpora: &'a Corpora,
}

struct Query {
    track: usize,
    start: usize,
    /// The track is absent from the database: always a miss.
    missing: bool,
}

/// Number of queries whose true track ranks within the top `k`.
pub fn hits_at(ranks: &[Option<usize>], k: usize) -> usize {
    ranks.iter().filter(|r| matches!(r, Some(r) if *r < k)).count()
}

/// Cuts the `seg_len`-sample query at `start` and applies `case`.
/// Shifts move later when `later` is set, flipping direction when the
/// shifted window would leave the track.
pub fn distort_query<R: Rng + ?Sized>(
    track: &AudioBuffer,
    start: usize,
    seg_len: usize,
    case: &DistortionCase,
    later: bool,
    corpora: &Corpora,
    colored_decay: [f64; 2],
    rng: &mut R,
) -> Result<AudioBuffer, EvalError> {
    let sr = track.sample_rate();
    let p = case.parameter.unwrap_or(0.0);
    let clean = || cut_padded(track, start, seg_len);
    let audio = match case.kind {
        DistortionKind::None => clean()?,
        DistortionKind::TimeShift => {
            let delta = (p / 100.0 * SHIFT_REFERENCE * f64::from(sr)).round() as usize;
            let fits_later = start + delta + seg_len <= track.len();
            let fits_earlier = start >= delta;
            let s = if (later && fits_later) || !fits_earlier {
                start + delta
            } else {
                start - delta
            };
            cut_padded(track, s, seg_len)?
        }
        DistortionKind::BackgroundNoise => {
            let clean = clean()?;
            let clip = corpora.noise.pick(rng);
            let rot = rng.random_range(0..clip.len());
            let rotated: Vec<f32> = clip.samples()[rot..].iter().chain(&clip.samples()[..rot]).copied().collect();
            let noise = loop_to_length(&AudioBuffer::new(rotated, sr)?, seg_len)?;
            if clean.power() > 0.0 {
                add_noise_at_snr(&clean, &noise, p)?
            } else {
                clean
            }
        }
        DistortionKind::ColoredNoise => {
            let clean = clean()?;
            let noise = colored_noise(seg_len, uniform(colored_decay, rng), sr, rng)?;
            if clean.power() > 0.0 {
                add_noise_at_snr(&clean, &noise, p)?
            } else {
                clean
            }
        }
        DistortionKind::Reverb => apply_reverb(&clean()?, corpora.impulse_responses.pick(rng))?,
        DistortionKind::TimeStretch => {
            let source = (seg_len as f64 * p).round() as usize;
            fit_length(time_stretch(&cut_padded(track, start, source)?, p)?, seg_len)?
        }
    };
    Ok(audio)
}

/// Cosine similarity between the segment at `start` and the segment
/// delayed by δ, for δ = 0, step, 2·step, ... up to `max_ms`.
pub fn shift_similarity_curve(
    model: &Model<f32>,
    featurizer: &Featurizer,
    track: &AudioBuffer,
    start: usize,
    max_ms: f64,
    step_ms: f64,
) -> Result<Vec<(f64, f64)>, EvalError> {
    let seg_len = featurizer.config().segment_samples();
    let sr = f64::from(track.sample_rate());
    let n = (max_ms / step_ms + 1e-9).floor() as usize + 1;
    let deltas: Vec<f64> = (0..n).map(|i| i as f64 * step_ms).collect();
    let specs = deltas
        .iter()
        .map(|d| {
            let s = start + (d / 1000.0 * sr).round() as usize;
            Ok(featurizer.log_mel(&track.slice(s, seg_len)?)?)
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let emb = model.embed_batch(&specs)?;
    Ok(deltas.into_iter().zip(&emb).map(|(d, e)| (d, emb[0].dot(e))).collect())
}

/// Runs every distortion case of `protocol` `runs` times over the
/// excerpts of every query track. Run `r` draws its distortions from a
/// seed derived from `seed` and `r`.
pub fn run_eval(inputs: &EvalInputs<'_>, protocol: &EvalProtocol, seed: u64, exec: Execution) -> Result<EvalReport, EvalError> {
    protocol.validate()?;
    let cfg = inputs.featurizer.config();
    let seg_len = cfg.segment_samples();
    let sr = f64::from(cfg.sample_rate);
    let hop_samples = protocol.hop * sr;
    let in_db: std::collections::HashSet<&str> = inputs.db.tracks().into_iter().collect();

    let mut queries = Vec::new();
    let mut skipped = 0usize;
    for (ti, (id, audio)) in inputs.tracks.iter().enumerate() {
        if audio.len() < seg_len {
            log::warn!("track {id:?} is shorter than one segment; skipped");
            skipped += 1;
            continue;
        }
        let missing = !in_db.contains(id.as_str());
        if missing && protocol.missing_tracks == MissingTrackPolicy::Error {
            return Err(EvalError::MissingTrack(id.clone()));
        }
        let n_segs = segment_count(audio.len(), seg_len, hop_samples);
        for t in excerpt_starts(audio.len(), seg_len, protocol.queries_per_track, sr) {
            let start = if protocol.align_to_hop {
                let k = ((t / protocol.hop).round() as usize).min(n_segs - 1);
                (k as f64 * hop_samples).round() as usize
            } else {
                (t * sr).round() as usize
            };
            queries.push(Query { track: ti, start, missing });
        }
    }
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let n_missing = queries.iter().filter(|q| q.missing).count();

    let mut rows = Vec::new();
    for run in 0..protocol.runs {
        let run_seed = derive_indexed(seed, "eval-run", run as u64);
        for case in protocol.suite() {
            let case_seed = derive_seed(run_seed, &case.to_string());
            let first_later = rng_for(case_seed, "shift-direction").random_bool(0.5);
            let indexed: Vec<(usize, &Query)> = queries.iter().enumerate().collect();
            let ranks: Vec<Option<MatchRank>> = par::try_map(exec, &indexed, |&(qi, q)| {
                if q.missing {
                    return Ok(None);
                }
                let (id, track) = &inputs.tracks[q.track];
                let mut rng = rng_from_seed(derive_indexed(case_seed, "query", qi as u64));
                let later = first_later ^ (qi % 2 == 1);
                let audio = distort_query(track, q.start, seg_len, &case, later, inputs.corpora, protocol.colored_decay, &mut rng)?;
                let emb = inputs.model.embed(&inputs.featurizer.log_mel(&audio)?)?;
                Ok::<_, EvalError>(inputs.db.match_rank(&emb, id)?)
            })?;
            for granularity in [Granularity::Segment, Granularity::Track] {
                let r: Vec<Option<usize>> = ranks
                    .iter()
                    .map(|m| {
                        m.map(|m| match granularity {
                            Granularity::Segment => m.segment,
                            Granularity::Track => m.track,
                        })
                    })
                    .collect();
                for &k in &protocol.k_values {
                    rows.push(ReportRow {
                        distortion: case.kind,
                        parameter: case.parameter,
                        run,
                        seed: run_seed,
                        granularity,
                        k,
                        queries: queries.len(),
                        hits: hits_at(&r, k),
                        missing: n_missing,
                        skipped_tracks: skipped,
                    });
                }
            }
        }
    }

    let mut shift_curves = Vec::new();
    let eligible: Vec<&Query> = queries.iter().filter(|q| !q.missing).collect();
    let probes = protocol.shift_probes.min(eligible.len());
    let max_shift = (protocol.shift_max_ms / 1000.0 * sr).round() as usize;
    for p in 0..probes {
        let q = eligible[p * eligible.len() / probes];
        let (id, track) = &inputs.tracks[q.track];
        let Some(room) = track.len().checked_sub(seg_len + max_shift) else {
            continue;
        };
        let start = q.start.min(room);
        let points = shift_similarity_curve(
            inputs.model,
            inputs.featurizer,
            track,
            start,
            protocol.shift_max_ms,
            protocol.shift_step_ms,
        )?;
        shift_curves.push(ShiftCurve {
            track_id: id.clone(),
            start: start as f64 / sr,
            points,
        });
    }

    Ok(EvalReport { rows, shift_curves })
}
