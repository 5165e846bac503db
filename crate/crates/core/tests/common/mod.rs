#![allow(dead_code)]

use cmps_core::linalg::{self, c, CMat};
use cmps_core::model::Cmps;
use num_complex::Complex64 as c64;

/// Transfer matrix assembled entry by entry, `(a,b),(c,d) ↦ conj(Q_ac)δ_bd + δ_ac Q_bd + conj(R_ac)R_bd`.
pub fn transfer_by_entries(q: &CMat, r: &CMat) -> CMat {
    let d = q.nrows();
    CMat::from_fn(d * d, d * d, |row, col| {
        let (a, b) = (row / d, row % d);
        let (cc, dd) = (col / d, col % d);
        let mut v = r[(a, cc)].conj() * r[(b, dd)];
        if b == dd {
            v += q[(a, cc)].conj();
        }
        if a == cc {
            v += q[(b, dd)];
        }
        v
    })
}

/// Matrix exponential by Taylor series with scaling and squaring.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let norm = (0..n)
        .map(|i| (0..n).map(|j| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut s = 1.0;
    while norm * s > 0.25 {
        s *= 0.5;
        squarings += 1;
    }
    let scaled = linalg::scale_re(a, s);
    let mut term = linalg::identity(n);
    let mut sum = linalg::identity(n);
    for k in 1..30 {
        term = linalg::scale_re(&(&term * &scaled), 1.0 / k as f64);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Left and right null vectors of `t` from its SVD, normalized so that `l·r = 1`.
pub fn fixed_points(t: &CMat) -> (Vec<c64>, Vec<c64>) {
    let dec = linalg::svd(t).unwrap();
    let last = t.nrows() - 1;
    let r: Vec<c64> = (0..t.nrows()).map(|i| dec.v[(i, last)]).collect();
    let mut l: Vec<c64> = (0..t.nrows()).map(|i| dec.u[(i, last)].conj()).collect();
    let overlap: c64 = l.iter().zip(&r).map(|(a, b)| a * b).sum();
    for x in &mut l {
        *x /= overlap;
    }
    (l, r)
}

/// `l Γ e^{T τ_{n−1}} Γ ⋯ e^{T τ_1} Γ r` with `Γ = conj(R)⊗R`.
pub fn oracle_correlator(state: &Cmps, taus: &[f64]) -> c64 {
    let t = transfer_by_entries(state.q(), state.r());
    let gamma = linalg::kron(&linalg::conj(state.r()), state.r());
    let (l, r) = fixed_points(&t);
    let mut v = linalg::mat_vec(&gamma, &r);
    for &tau in taus {
        let prop = expm(&linalg::scale_re(&t, tau));
        v = linalg::mat_vec(&gamma, &linalg::mat_vec(&prop, &v));
    }
    l.iter().zip(&v).map(|(a, b)| a * b).sum()
}

pub fn rel_err(a: c64, b: c64) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn random_gauge(d: usize, seed: u64) -> CMat {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
    let mut next = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut g = linalg::identity(d);
    for i in 0..d {
        for j in 0..d {
            g[(i, j)] += c(0.6 * next(), 0.6 * next());
        }
    }
    g
}
