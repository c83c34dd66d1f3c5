//! Dense kernels. Rows of the output are independent, so splitting them
//! across threads does not change any result bit.

use super::Real;
use crate::par::{self, Execution};

/// Work below this many multiply-adds stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 18;

fn exec_for(work: usize, exec: Execution) -> Execution {
    if work >= PAR_THRESHOLD {
        exec
    } else {
        Execution::Sequential
    }
}

fn rows_per_chunk(m: usize) -> usize {
    m.div_ceil(32).max(1)
}

/// `out[m×n] = a[m×k] · b[k×n]`
pub(crate) fn matmul<T: Real>(exec: Execution, a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if n == 0 {
        return out;
    }
    let rows = rows_per_chunk(m);
    par::for_each_chunk_mut(exec_for(m * k * n, exec), &mut out, rows * n, |ci, chunk| {
        for (ri, orow) in chunk.chunks_mut(n).enumerate() {
            let i = ci * rows + ri;
            let arow = &a[i * k..(i + 1) * k];
            for (l, &av) in arow.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                let brow = &b[l * n..(l + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    });
    out
}

/// `out[m×n] = a[m×k] · b[n×k]ᵀ`
pub(crate) fn matmul_nt<T: Real>(exec: Execution, a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    if n == 0 {
        return out;
    }
    let rows = rows_per_chunk(m);
    par::for_each_chunk_mut(exec_for(m * k * n, exec), &mut out, rows * n, |ci, chunk| {
        for (ri, orow) in chunk.chunks_mut(n).enumerate() {
            let i = ci * rows + ri;
            let arow = &a[i * k..(i + 1) * k];
            for (j, o) in orow.iter_mut().enumerate() {
                let brow = &b[j * k..(j + 1) * k];
                let mut acc = T::zero();
                for (&x, &y) in arow.iter().zip(brow) {
                    acc += x * y;
                }
                *o = acc;
            }
        }
    });
    out
}

/// `out[k×n] = a[m×k]ᵀ · b[m×n]`
pub(crate) fn matmul_tn<T: Real>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (l, &av) in arow.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let orow = &mut out[l * n..(l + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

pub(crate) fn transpose<T: Real>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}
