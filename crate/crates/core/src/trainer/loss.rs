use crate::autodiff::{AutodiffError, CustomOp, Graph, Real, Tensor, Var};

/// Allowed deviation of an input embedding's norm from 1.
pub const NORM_TOLERANCE: f64 = 1e-4;

fn check_inputs<T: Real>(z: &Tensor<T>, tau: f64) -> Result<(usize, usize), AutodiffError> {
    let (n, d) = z.dims2("nt_xent")?;
    if n < 4 || n % 2 != 0 {
        return Err(AutodiffError::InvalidArgument(format!(
            "nt_xent needs 2B rows with B >= 2, got {n}"
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(AutodiffError::InvalidArgument(format!("nt_xent temperature must be positive, got {tau}")));
    }
    for i in 0..n {
        let norm = z.row(i).iter().map(|v| v.f64() * v.f64()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(AutodiffError::InvalidArgument(format!(
                "nt_xent input row {i} has norm {norm}, expected unit norm"
            )));
        }
    }
    Ok((n, d))
}

/// Loss and its gradient with respect to `z` for embeddings ordered
/// `[orig_1..orig_B, rep_1..rep_B]`.
///
/// With `S = Z Zᵀ / τ` and `j = (i + B) mod 2B`, each row contributes
/// `−S_ij + log Σ_{k≠i} exp S_ik`; the loss is the mean over all 2B rows.
pub fn nt_xent_with_grad<T: Real>(z: &Tensor<T>, tau: f64) -> Result<(f64, Tensor<T>), AutodiffError> {
    let (n, d) = check_inputs(z, tau)?;
    let b = n / 2;
    let zf: Vec<f64> = z.data().iter().map(|v| v.f64()).collect();
    let row = |i: usize| &zf[i * d..(i + 1) * d];
    let mut s = vec![0.0f64; n * n];
    for i in 0..n {
        for k in i..n {
            let v = row(i).iter().zip(row(k)).map(|(a, c)| a * c).sum::<f64>() / tau;
            s[i * n + k] = v;
            s[k * n + i] = v;
        }
    }
    let mut loss = 0.0;
    let mut ds = vec![0.0f64; n * n];
    for i in 0..n {
        let j = (i + b) % n;
        let srow = &s[i * n..(i + 1) * n];
        let m = (0..n).filter(|&k| k != i).map(|k| srow[k]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..n).filter(|&k| k != i).map(|k| (srow[k] - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - srow[j];
        for k in (0..n).filter(|&k| k != i) {
            let p = (srow[k] - lse).exp();
            ds[i * n + k] = (p - if k == j { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    loss /= n as f64;
    let mut dz = vec![T::zero(); n * d];
    for i in 0..n {
        for k in 0..n {
            let w = (ds[i * n + k] + ds[k * n + i]) / tau;
            if w != 0.0 {
                for (out, zk) in dz[i * d..(i + 1) * d].iter_mut().zip(row(k)) {
                    *out = *out + T::c(w * zk);
                }
            }
        }
    }
    Ok((loss, Tensor::new(vec![n, d], dz)?))
}

/// NT-Xent loss value.
pub fn nt_xent<T: Real>(z: &Tensor<T>, tau: f64) -> Result<f64, AutodiffError> {
    Ok(nt_xent_with_grad(z, tau)?.0)
}

/// NT-Xent as a graph operation on a `[2B × d]` node of unit-norm rows.
pub struct NtXent {
    pub temperature: f64,
}

impl<T: Real> CustomOp<T> for NtXent {
    fn name(&self) -> &'static str {
        "nt_xent"
    }

    fn forward(&self, inputs: &[&Tensor<T>]) -> Result<Tensor<T>, AutodiffError> {
        Ok(Tensor::scalar(T::c(nt_xent(inputs[0], self.temperature)?)))
    }

    fn backward(&self, inputs: &[&Tensor<T>], _output: &Tensor<T>, grad: &Tensor<T>) -> Vec<Option<Tensor<T>>> {
        let g = grad.item();
        let dz = nt_xent_with_grad(inputs[0], self.temperature)
            .expect("inputs were validated in forward")
            .1
            .map(|v| v * g);
        vec![Some(dz)]
    }
}

pub fn nt_xent_node<T: Real>(g: &mut Graph<T>, z: Var, temperature: f64) -> Result<Var, AutodiffError> {
    g.custom(&[z], Box::new(NtXent { temperature }))
}
