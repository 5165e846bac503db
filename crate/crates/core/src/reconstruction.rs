//! From estimated poles and residues to `(D, M)`, Wick predictions and a gauge-fixed `(Q, R, K)`.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::correlators::{self, CorrelationTensor, SpectralData};
use crate::error::{Error, Result, StageExt};
use crate::estimation::{self, EstimatorConfig, PoleEstimate, ResidueModel};
use crate::linalg::{self, c, c64, CMat};
use crate::model::{self, build_transfer, Cmps, REAL_TOL};
use crate::tensor;

pub const DEFAULT_MATCH_TOL: f64 = 1e-3;
pub const DEFAULT_PAIRING_TOL: f64 = 0.05;
pub const DEFAULT_KRONECKER_THRESHOLD: f64 = 1e-3;
pub const GAUGE_MAX_ITERATIONS: usize = 200;
pub const GAUGE_TARGET: f64 = 1e-10;

/// Poles `D` with the chain matrix `M` normalized to a first row of ones.
#[derive(Clone, Debug, PartialEq)]
pub struct MdModel {
    pub poles: Vec<c64>,
    pub m: CMat,
    pub mhat11: f64,
    pub kappa: usize,
    /// `Ξ conj(M) Ξ` defect measured before symmetrization.
    pub symmetry_defect: f64,
    /// Entries without a usable prescription (zero-filled in block-tolerant mode).
    pub unknown: Vec<(usize, usize)>,
}

impl MdModel {
    pub fn order(&self) -> usize {
        self.poles.len()
    }

    /// `d` with `d² = order`, or [`Error::NonSquareOrder`].
    pub fn bond_dimension(&self) -> Result<usize> {
        square_root(self.order())
    }

    /// `M̂ = M̂_{1,1} M`, the un-normalized chain matrix.
    pub fn scaled_m(&self) -> CMat {
        linalg::scale_re(&self.m, self.mhat11)
    }

    /// Normalizes exact spectral data by the diagonal similarity making row one all ones.
    pub fn from_spectral(sd: &SpectralData) -> Result<Self> {
        let k = sd.order();
        let m00 = sd.m[(0, 0)];
        if !(m00.re > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "M_11 = {m00} is not a positive density"
            )));
        }
        let row_scale = linalg::max_abs(&sd.m);
        let mut unknown = Vec::new();
        let mut dvec = vec![c(1.0, 0.0); k];
        for j in 1..k {
            let m0j = sd.m[(0, j)];
            if m0j.norm() <= 1e-12 * row_scale {
                unknown.push((0, j));
            } else {
                dvec[j] = m00 / m0j;
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownMEntries {
                count: unknown.len(),
            });
        }
        let m = CMat::from_fn(k, k, |i, j| sd.m[(i, j)] * dvec[j] / (dvec[i] * m00));
        Ok(Self {
            poles: sd.poles.clone(),
            symmetry_defect: model::xi_symmetry_defect(&m, sd.kappa)?,
            m,
            mhat11: m00.re,
            kappa: sd.kappa,
            unknown,
        })
    }

    /// Spectral data equivalent to this model (`M̂` in place of `M`).
    pub fn to_spectral(&self) -> SpectralData {
        SpectralData {
            d: square_root(self.order()).unwrap_or(0),
            poles: self.poles.clone(),
            m: self.scaled_m(),
            kappa: self.kappa,
            density: self.mhat11,
        }
    }
}

fn square_root(order: usize) -> Result<usize> {
    let d = (order as f64).sqrt().round() as usize;
    if d * d != order || d == 0 {
        return Err(Error::NonSquareOrder { order });
    }
    Ok(d)
}

/// Greedy minimal-distance matching: `perm[i]` is the index in `other` paired with `reference[i]`.
pub fn match_poles(reference: &[c64], other: &[c64], rel_tol: f64) -> Result<Vec<usize>> {
    if reference.len() != other.len() {
        return Err(Error::DimensionMismatch {
            what: "pole counts",
            expected: reference.len(),
            found: other.len(),
        });
    }
    let n = reference.len();
    let scale = reference
        .iter()
        .chain(other)
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let floor = 1e-2 * scale;
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            pairs.push(((reference[i] - other[j]).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut perm = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    for (dist, i, j) in pairs {
        if perm[i] != usize::MAX || taken[j] {
            continue;
        }
        let bound = rel_tol * reference[i].norm().max(other[j].norm()).max(floor);
        if dist <= bound {
            perm[i] = j;
            taken[j] = true;
        }
    }
    let unmatched: Vec<(f64, f64)> = (0..n)
        .filter(|&i| perm[i] == usize::MAX)
        .map(|i| (reference[i].re, reference[i].im))
        .chain((0..n).filter(|&j| !taken[j]).map(|j| (other[j].re, other[j].im)))
        .collect();
    if !unmatched.is_empty() {
        return Err(Error::PoleMismatch { unmatched });
    }
    Ok(perm)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractMConfig {
    pub match_tol: f64,
    pub block_tolerant: bool,
}

impl Default for ExtractMConfig {
    fn default() -> Self {
        Self {
            match_tol: DEFAULT_MATCH_TOL,
            block_tolerant: false,
        }
    }
}

/// Assembles `M` from ratio prescriptions of 3-point (and optional 2-point and
/// higher) residues, averaging all available prescriptions per entry.
pub fn extract_m(
    rm3: &ResidueModel,
    rm2: Option<&ResidueModel>,
    higher: &[ResidueModel],
    cfg: &ExtractMConfig,
) -> Result<MdModel> {
    if rm3.n != 3 {
        return Err(Error::InvalidArgument(format!(
            "primary residue model must be 3-point, got n = {}",
            rm3.n
        )));
    }
    let order = model::order_poles(&rm3.poles, REAL_TOL)?;
    let rm3 = rm3.select(&order.perm);
    let k = rm3.order();
    let align = |rm: &ResidueModel| -> Result<ResidueModel> {
        let perm = match_poles(&rm3.poles, &rm.poles, cfg.match_tol)?;
        Ok(rm.select(&perm))
    };
    let rm2 = match rm2 {
        Some(r) if r.n != 2 => {
            return Err(Error::InvalidArgument(format!(
                "secondary residue model must be 2-point, got n = {}",
                r.n
            )))
        }
        Some(r) => Some(align(r)?),
        None => None,
    };
    let higher: Vec<ResidueModel> = higher
        .iter()
        .filter(|r| r.n > 3)
        .map(|r| align(r))
        .collect::<Result<_>>()?;

    let mut density_estimates = Vec::new();
    let mut push_density = |value: f64, n: usize| {
        if value > 0.0 {
            density_estimates.push(value.powf(1.0 / n as f64));
        }
    };
    push_density(rm3.residues[0].re, 3);
    if let Some(r) = &rm2 {
        push_density(r.residues[0].re, 2);
    }
    for r in &higher {
        push_density(r.residues[0].re, r.n);
    }
    if density_estimates.is_empty() {
        return Err(Error::InvalidArgument(
            "stationary residues do not give a positive density".into(),
        ));
    }
    let mhat11 = density_estimates.iter().sum::<f64>() / density_estimates.len() as f64;

    let cut3 = 1e-10 * rm3.residues.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cut2 = rm2
        .as_ref()
        .map(|r| 1e-10 * mhat11 * r.residues.iter().map(|z| z.norm()).fold(0.0, f64::max));
    let cuts: Vec<f64> = higher
        .iter()
        .map(|r| 1e-10 * r.residues.iter().map(|z| z.norm()).fold(0.0, f64::max))
        .collect();

    let mut m = linalg::zeros(k, k);
    let mut unknown = Vec::new();
    for j in 0..k {
        m[(0, j)] = c(1.0, 0.0);
    }
    for i in 1..k {
        for j in 0..k {
            let mut sum = c(0.0, 0.0);
            let mut count = 0usize;
            let mut add = |num: c64, den: c64, cut: f64| {
                if den.norm() > cut {
                    sum += num / den;
                    count += 1;
                }
            };
            let num3 = rm3.get(&[j, i]);
            add(num3, rm3.get(&[j, 0]), cut3);
            if let (Some(r), Some(cut)) = (&rm2, cut2) {
                add(num3, r.get(&[j]) * mhat11, cut);
            }
            for (r, &cut) in higher.iter().zip(&cuts) {
                let lead = r.n - 3;
                let mut idx = vec![0usize; r.n - 1];
                for flat in 0..k.pow(lead as u32) {
                    tensor::unflatten(flat, lead, k, &mut idx[..lead]);
                    idx[lead] = j;
                    idx[lead + 1] = i;
                    let num = r.get(&idx);
                    idx[lead + 1] = 0;
                    let den = r.get(&idx);
                    add(num, den, cut);
                }
            }
            if count == 0 {
                unknown.push((i, j));
            } else {
                m[(i, j)] = sum / count as f64;
            }
        }
    }
    if !unknown.is_empty() {
        if cfg.block_tolerant {
            warn!("{} M entries unknown; filled with zero", unknown.len());
        } else {
            return Err(Error::UnknownMEntries {
                count: unknown.len(),
            });
        }
    }
    let symmetry_defect = model::xi_symmetry_defect(&m, order.kappa)?;
    let xi = model::xi_map(k, order.kappa)?;
    let mirrored = model::conj_permuted(&m, &xi);
    let m = CMat::from_fn(k, k, |i, j| (m[(i, j)] + mirrored[(i, j)]) * 0.5);
    debug!("M symmetry defect before averaging: {symmetry_defect:.3e}");
    Ok(MdModel {
        poles: rm3.poles.clone(),
        m,
        mhat11,
        kappa: order.kappa,
        symmetry_defect,
        unknown,
    })
}

/// Residues of the `n`-point function predicted by the matrix-product Wick identity.
pub fn wick_predict(md: &MdModel, n: usize) -> Result<ResidueModel> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("correlator order {n} < 2")));
    }
    Ok(ResidueModel {
        poles: md.poles.clone(),
        residues: correlators::residue_tensor(&md.scaled_m(), n)?,
        n,
        rms_fit_error: 0.0,
        condition: 1.0,
    })
}

/// Diagonal `R_rec` with the eigenbasis `Y` of `M̂` and the Kronecker index map.
#[derive(Clone, Debug, PartialEq)]
pub struct RExtraction {
    pub r: Vec<c64>,
    pub y: CMat,
    /// `assignment[a·d + b]` is the column of `Y` with eigenvalue `conj(r_a) r_b`.
    pub assignment: Vec<usize>,
    pub eigenvalues: Vec<c64>,
    pub reference_index: usize,
    pub conjugated: bool,
    pub pairing_defect: f64,
}

impl RExtraction {
    pub fn d(&self) -> usize {
        self.r.len()
    }

    pub fn r_matrix(&self) -> CMat {
        linalg::diag(&self.r)
    }

    /// `O` as a matrix: `Y O` has column `a·d + b` equal to column `assignment[a·d+b]` of `Y`.
    pub fn o_matrix(&self) -> CMat {
        let n = self.assignment.len();
        let mut o = linalg::zeros(n, n);
        for (p, &col) in self.assignment.iter().enumerate() {
            o[(col, p)] = c(1.0, 0.0);
        }
        o
    }
}

/// Greedy nearest assignment of predicted products to eigenvalues; returns the
/// maximal relative mismatch and the index map.
fn assign_products(r: &[c64], values: &[c64], scale: f64) -> (f64, Vec<usize>) {
    let d = r.len();
    let mut used = vec![false; values.len()];
    let mut map = vec![0usize; d * d];
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in 0..d {
            let p = r[a].conj() * r[b];
            let (best, dist) = values
                .iter()
                .enumerate()
                .filter(|(i, _)| !used[*i])
                .map(|(i, v)| (i, (v - p).norm()))
                .min_by(|x, y| x.1.total_cmp(&y.1))
                .expect("enough eigenvalues");
            used[best] = true;
            map[a * d + b] = best;
            worst = worst.max(dist / scale);
        }
    }
    (worst, map)
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Diagonalizes `M̂` and identifies its spectrum with `{conj(r_a) r_b}`.
pub fn extract_r(md: &MdModel, pairing_tol: f64) -> Result<RExtraction> {
    let d = md.bond_dimension()?;
    if !md.unknown.is_empty() {
        return Err(Error::UnknownMEntries {
            count: md.unknown.len(),
        });
    }
    let mhat = md.scaled_m();
    let (values, y) = linalg::eig(&mhat)?;
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Pairing { defect: f64::INFINITY });
    }
    let reference_index = (0..values.len())
        .max_by(|&a, &b| {
            values[a]
                .norm()
                .total_cmp(&values[b].norm())
                .then(values[b].arg().total_cmp(&values[a].arg()))
        })
        .expect("nonempty spectrum");
    let r_ref = c(values[reference_index].norm().sqrt(), 0.0);
    let others: Vec<usize> = (0..values.len()).filter(|&i| i != reference_index).collect();

    let mut best: Option<(f64, Vec<c64>)> = None;
    for_each_combination(others.len(), d - 1, |combo| {
        let mut r = Vec::with_capacity(d);
        r.push(r_ref);
        r.extend(combo.iter().map(|&i| values[others[i]] / r_ref));
        let (cost, _) = assign_products(&r, &values, scale);
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, r));
        }
    });
    let (_, mut r) = best.expect("at least one candidate");
    let conjugated = r
        .iter()
        .find(|z| z.im.abs() > 1e-9 * (1.0 + z.norm()))
        .is_some_and(|z| z.im < 0.0);
    if conjugated {
        for z in &mut r {
            *z = z.conj();
        }
    }
    let (pairing_defect, assignment) = assign_products(&r, &values, scale);
    if !(pairing_defect <= pairing_tol) {
        return Err(Error::Pairing {
            defect: pairing_defect,
        });
    }
    Ok(RExtraction {
        r,
        y,
        assignment,
        eigenvalues: values,
        reference_index,
        conjugated,
        pairing_defect,
    })
}

/// `Q_rec` read off the Kronecker-sum structure of `S = (YO)⁻¹(D − M̂)(YO)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QExtraction {
    pub q: CMat,
    pub s: CMat,
    pub kronecker_defect: f64,
}

fn kron_sum(q: &CMat) -> CMat {
    let id = linalg::identity(q.nrows());
    linalg::kron(&linalg::conj(q), &id) + linalg::kron(&id, q)
}

pub fn extract_q(md: &MdModel, rx: &RExtraction, kronecker_threshold: f64) -> Result<QExtraction> {
    let d = rx.d();
    let n = d * d;
    if md.order() != n {
        return Err(Error::DimensionMismatch {
            what: "M versus R extraction",
            expected: n,
            found: md.order(),
        });
    }
    let xi = model::xi_map(n, md.kappa)?;
    let mut z = CMat::from_fn(n, n, |i, p| rx.y[(i, rx.assignment[p])]);

    // Pair columns related by Ξ conj(·) Λ; self-paired columns get the phase that fixes them.
    for a in 0..d {
        let p = a * d + a;
        let col = linalg::column(&z, p);
        let mirrored: Vec<c64> = (0..n).map(|i| col[xi[i]].conj()).collect();
        let overlap = linalg::inner(&col, &mirrored) / linalg::inner(&col, &col);
        let beta = if overlap.norm() > 0.0 {
            (overlap / overlap.norm()).sqrt()
        } else {
            c(1.0, 0.0)
        };
        for i in 0..n {
            z[(i, p)] = col[i] * beta;
        }
        for b in a + 1..d {
            let src = a * d + b;
            let dst = b * d + a;
            for i in 0..n {
                z[(i, dst)] = z[(xi[i], src)].conj();
            }
        }
    }

    let zinv = linalg::inverse(&z, "eigenvector basis of M")?;
    let mut dm = linalg::scale_re(&md.m, -md.mhat11);
    for k in 0..n {
        dm[(k, k)] += md.poles[k];
    }
    let s = &zinv * dm * &z;

    let u = kronecker_rescaling(&s, d);
    let s = CMat::from_fn(n, n, |p, q| s[(p, q)] * u[q] / u[p]);

    let mut q = linalg::zeros(d, d);
    for b in 0..d {
        for e in 0..d {
            if b == e {
                continue;
            }
            let mut acc = c(0.0, 0.0);
            for a in 0..d {
                acc += s[(a * d + b, a * d + e)];
                acc += s[(b * d + a, e * d + a)].conj();
            }
            q[(b, e)] = acc / (2 * d) as f64;
        }
    }
    let q00 = 0.5 * s[(0, 0)].re;
    q[(0, 0)] = c(q00, 0.0);
    for b in 1..d {
        let right = s[(b, b)] - q00;
        let left = (s[(b * d, b * d)] - q00).conj();
        q[(b, b)] = (right + left) * 0.5;
    }
    let scale = linalg::max_abs(&s).max(f64::MIN_POSITIVE);
    let kronecker_defect = linalg::max_abs_diff(&s, &kron_sum(&q)) / scale;
    if !(kronecker_defect <= kronecker_threshold) {
        return Err(Error::KroneckerDefect {
            defect: kronecker_defect,
            threshold: kronecker_threshold,
        });
    }
    Ok(QExtraction {
        q,
        s,
        kronecker_defect,
    })
}

/// Diagonal similarity `u` that makes the blocks of `S` consistent with a Kronecker
/// sum, with `u = 1` on row and column zero of the `(a, b)` grid.
fn kronecker_rescaling(s: &CMat, d: usize) -> Vec<c64> {
    let n = d * d;
    let mut u = vec![c(1.0, 0.0); n];
    let mut known = vec![false; n];
    for a in 0..d {
        known[a * d] = true;
        known[a] = true;
    }
    // edges (from, to, ratio u_to/u_from, weight)
    let mut edges: Vec<(usize, usize, c64, f64)> = Vec::new();
    for a in 1..d {
        for b in 0..d {
            for e in 0..d {
                if b == e {
                    continue;
                }
                let here = s[(a * d + b, a * d + e)];
                let top = s[(b, e)];
                let w = here.norm().min(top.norm());
                if w > 0.0 {
                    edges.push((a * d + b, a * d + e, top / here, w));
                }
            }
        }
    }
    for b in 1..d {
        for a in 0..d {
            for cc in 0..d {
                if a == cc {
                    continue;
                }
                let here = s[(a * d + b, cc * d + b)];
                let left = s[(a * d, cc * d)];
                let w = here.norm().min(left.norm());
                if w > 0.0 {
                    edges.push((a * d + b, cc * d + b, left / here, w));
                }
            }
        }
    }
    loop {
        let mut best: Option<(usize, c64, f64)> = None;
        for &(from, to, ratio, w) in &edges {
            let candidate = if known[from] && !known[to] {
                Some((to, u[from] * ratio))
            } else if known[to] && !known[from] {
                Some((from, u[to] / ratio))
            } else {
                None
            };
            if let Some((node, value)) = candidate {
                if best.is_none_or(|(_, _, bw)| w > bw) {
                    best = Some((node, value, w));
                }
            }
        }
        match best {
            Some((node, value, _)) => {
                u[node] = value;
                known[node] = true;
            }
            None => break,
        }
    }
    u
}

/// Hermitian `K` in the gauge `Q + Q† + R†R = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct KExtraction {
    pub k: CMat,
    pub q: CMat,
    pub r: CMat,
    pub gauge_residual: f64,
    pub iterations: usize,
    pub hermitian_defect: f64,
}

fn relative_gauge_residual(q: &CMat, r: &CMat) -> f64 {
    let scale = linalg::max_abs(q) + linalg::max_abs(&(linalg::adjoint(r) * r));
    model::gauge_residual(q, r) / scale.max(f64::MIN_POSITIVE)
}

pub fn extract_k(q: &CMat, r: &CMat) -> Result<KExtraction> {
    let mut state = model::stationarize(&Cmps::new(q.clone(), r.clone())?)?;
    let d = state.d();
    let mut iterations = 0;
    let mut residual = relative_gauge_residual(state.q(), state.r());
    while residual > GAUGE_TARGET && iterations < GAUGE_MAX_ITERATIONS {
        iterations += 1;
        let t = build_transfer(&state);
        let (values, vectors) = linalg::eig(&linalg::transpose(t.matrix()))?;
        let top = (0..values.len())
            .max_by(|&a, &b| values[a].re.total_cmp(&values[b].re))
            .expect("nonempty spectrum");
        let v = linalg::column(&vectors, top);
        let trace: c64 = (0..d).map(|i| v[i * d + i]).sum();
        if trace.norm() == 0.0 {
            return Err(Error::GaugeNotConverged {
                residual,
                iterations,
            });
        }
        let phase = trace.conj() / trace.norm();
        let l = CMat::from_fn(d, d, |i, j| v[i * d + j] * phase);
        let (ev, basis) = linalg::hermitian_eig(&linalg::hermitian_part(&l))?;
        let top_ev = ev.iter().cloned().fold(0.0, f64::max);
        if ev.iter().any(|&x| x <= 1e-14 * top_ev) {
            return Err(Error::GaugeNotConverged {
                residual,
                iterations,
            });
        }
        let inv_sqrt: Vec<c64> = ev.iter().map(|&x| c(1.0 / x.sqrt(), 0.0)).collect();
        let g_inv = &basis * linalg::diag(&inv_sqrt) * linalg::adjoint(&basis);
        state = model::gauge_transform(&state, &g_inv)?;
        state = model::stationarize(&state)?;
        residual = relative_gauge_residual(state.q(), state.r());
    }
    if residual > GAUGE_TARGET.max(1e-8) {
        return Err(Error::GaugeNotConverged {
            residual,
            iterations,
        });
    }
    let (q, r) = state.into_parts();
    let half = linalg::scale_re(&(linalg::adjoint(&r) * &r), 0.5);
    let raw = linalg::scale(&(&q + half), c(0.0, 1.0));
    let scale = linalg::max_abs(&raw).max(f64::MIN_POSITIVE);
    Ok(KExtraction {
        hermitian_defect: linalg::hermitian_defect(&raw) / scale,
        k: linalg::hermitian_part(&raw),
        q,
        r,
        gauge_residual: residual,
        iterations,
    })
}

/// Sorted eigenvalue differences `κ_j − κ_0` of a Hermitian matrix.
pub fn k_differences(k: &CMat) -> Result<Vec<f64>> {
    let (ev, _) = linalg::hermitian_eig(k)?;
    Ok(ev.iter().map(|x| x - ev[0]).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeNote {
    /// Index of the reference eigenvalue of `M̂` whose root fixes the phase of `R`.
    pub reference_index: usize,
    /// Whether the conjugate solution `conj(R)` was selected.
    pub conjugated: bool,
    /// `Im q_11` is set to zero.
    pub q11_imag: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub symmetry_defect: f64,
    pub kronecker_defect: Option<f64>,
    pub rms_fit_error: f64,
    pub pairing_defect: Option<f64>,
    pub gauge_residual: Option<f64>,
    pub k_hermitian_defect: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructedCmps {
    pub q: CMat,
    pub r: CMat,
    pub k: Option<CMat>,
    pub gauge_note: GaugeNote,
}

impl ReconstructedCmps {
    pub fn cmps(&self) -> Result<Cmps> {
        Cmps::new(self.q.clone(), self.r.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructConfig {
    pub estimator: EstimatorConfig,
    pub match_tol: f64,
    pub pairing_tol: f64,
    pub kronecker_threshold: f64,
    pub block_tolerant: bool,
    pub compute_k: bool,
    /// Gauss-Newton polish of the estimated poles against the projected 3-point signal.
    pub refine_poles: bool,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            match_tol: DEFAULT_MATCH_TOL,
            pairing_tol: DEFAULT_PAIRING_TOL,
            kronecker_threshold: DEFAULT_KRONECKER_THRESHOLD,
            block_tolerant: false,
            compute_k: true,
            refine_poles: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reconstruction {
    pub md: MdModel,
    pub rm3: ResidueModel,
    pub rm2: Option<ResidueModel>,
    pub cmps: Option<ReconstructedCmps>,
    pub quality: Quality,
}

/// Estimates poles and residues and assembles the `(D, M)` model.
pub fn reconstruct_md(
    c3: &CorrelationTensor,
    c2: Option<&CorrelationTensor>,
    cfg: &ReconstructConfig,
) -> Result<Reconstruction> {
    if c3.n != 3 {
        return Err(Error::InvalidArgument(format!(
            "expected a 3-point tensor, got n = {}",
            c3.n
        )));
    }
    if let Some(c2) = c2 {
        if c2.n != 2 {
            return Err(Error::InvalidArgument(format!(
                "expected a 2-point tensor, got n = {}",
                c2.n
            )));
        }
        if (c2.delta_tau - c3.delta_tau).abs() > 1e-12 * c3.delta_tau {
            return Err(Error::DeltaTauMismatch {
                left: c3.delta_tau,
                right: c2.delta_tau,
            });
        }
    }
    let signal = estimation::project_average(c3).stage("project_average")?;
    let mut poles = estimation::estimate_poles(&signal, c3.delta_tau, &cfg.estimator)
        .stage("pole_estimation")?;
    if cfg.refine_poles {
        let refined = estimation::refine_poles(&poles, &signal, 30).stage("pole_refinement")?;
        poles = if cfg.estimator.symmetrize {
            PoleEstimate::from_lambdas(estimation::conjugate_symmetrize(&refined.lambdas), c3.delta_tau)
        } else {
            refined
        };
    }
    let order = model::order_poles(&poles.lambdas, REAL_TOL).stage("pole_ordering")?;
    let poles = PoleEstimate::from_lambdas(
        order.perm.iter().map(|&i| poles.lambdas[i]).collect(),
        c3.delta_tau,
    );
    let rm3 = estimation::solve_residues(&poles, c3).stage("residues_3pt")?;
    let rm2 = match c2 {
        Some(c2) => {
            let c2 = if c2.amputated {
                let density = rm3.residues[0].re.max(0.0).cbrt();
                let shift = density * density;
                CorrelationTensor::new(
                    2,
                    c2.n_samples,
                    c2.delta_tau,
                    false,
                    c2.values.iter().map(|z| z + shift).collect(),
                )?
            } else {
                c2.clone()
            };
            Some(estimation::solve_residues(&poles, &c2).stage("residues_2pt")?)
        }
        None => None,
    };
    let md = extract_m(
        &rm3,
        rm2.as_ref(),
        &[],
        &ExtractMConfig {
            match_tol: cfg.match_tol,
            block_tolerant: cfg.block_tolerant,
        },
    )
    .stage("extract_M")?;
    let quality = Quality {
        symmetry_defect: md.symmetry_defect,
        rms_fit_error: rm3.rms_fit_error,
        ..Quality::default()
    };
    Ok(Reconstruction {
        md,
        rm3,
        rm2,
        cmps: None,
        quality,
    })
}

/// Full pipeline: `(D, M)` followed by `R`, `Q` and optionally `K` extraction.
pub fn reconstruct(
    c3: &CorrelationTensor,
    c2: Option<&CorrelationTensor>,
    cfg: &ReconstructConfig,
) -> Result<Reconstruction> {
    let mut rec = reconstruct_md(c3, c2, cfg)?;
    let cmps = cmps_from_md(&rec.md, cfg, &mut rec.quality)?;
    rec.cmps = Some(cmps);
    Ok(rec)
}

/// `R`, `Q` and optionally `K` extraction from a `(D, M)` model.
pub fn cmps_from_md(md: &MdModel, cfg: &ReconstructConfig, quality: &mut Quality) -> Result<ReconstructedCmps> {
    let rx = extract_r(md, cfg.pairing_tol).stage("extract_R")?;
    quality.pairing_defect = Some(rx.pairing_defect);
    let qx = extract_q(md, &rx, cfg.kronecker_threshold).stage("extract_Q")?;
    quality.kronecker_defect = Some(qx.kronecker_defect);
    let r = rx.r_matrix();
    let k = if cfg.compute_k {
        let kx = extract_k(&qx.q, &r).stage("extract_K")?;
        quality.gauge_residual = Some(kx.gauge_residual);
        quality.k_hermitian_defect = Some(kx.hermitian_defect);
        Some(kx.k)
    } else {
        None
    };
    Ok(ReconstructedCmps {
        q: qx.q,
        r,
        k,
        gauge_note: GaugeNote {
            reference_index: rx.reference_index,
            conjugated: rx.conjugated,
            q11_imag: 0.0,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub n: usize,
    pub relative_sup: f64,
    pub relative_rms: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Compares the Wick prediction of `md` with an observed tensor on its own grid.
pub fn consistency_check(
    md: &MdModel,
    observed: &CorrelationTensor,
    threshold: f64,
) -> Result<ConsistencyReport> {
    let predicted = predict_tensor(md, observed.n, observed.n_samples, observed.delta_tau, observed.amputated)?;
    if predicted.values.len() != observed.values.len() {
        return Err(Error::GridMismatch(format!(
            "{} predicted versus {} observed entries",
            predicted.values.len(),
            observed.values.len()
        )));
    }
    let relative_sup = correlators::relative_sup_distance(&predicted.values, &observed.values);
    let diff: f64 = predicted
        .values
        .iter()
        .zip(&observed.values)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    let norm: f64 = observed.values.iter().map(|z| z.norm_sqr()).sum();
    let relative_rms = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
    Ok(ConsistencyReport {
        n: observed.n,
        relative_sup,
        relative_rms,
        threshold,
        pass: relative_sup <= threshold,
    })
}

/// Wick-predicted `n`-point tensor on the grid `l·Δτ`.
pub fn predict_tensor(
    md: &MdModel,
    n: usize,
    n_samples: usize,
    delta_tau: f64,
    amputated: bool,
) -> Result<CorrelationTensor> {
    let mut ct = correlators::sample_chain(
        &md.poles,
        &md.scaled_m(),
        n,
        n_samples,
        delta_tau,
        correlators::DEFAULT_MAX_ENTRIES,
    )?;
    if amputated {
        ct = correlators::amputate(&ct, md.mhat11)?;
    }
    Ok(ct)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_md() -> MdModel {
        MdModel {
            poles: vec![c(0.0, 0.0), c(-1.0, 0.0)],
            m: linalg::from_real_rows(&[&[1.0, 1.0], &[2.0, 3.0]]),
            mhat11: 1.0,
            kappa: 2,
            symmetry_defect: 0.0,
            unknown: Vec::new(),
        }
    }

    #[test]
    fn toy_prescription() {
        let md = toy_md();
        let rm3 = wick_predict(&md, 3).unwrap();
        assert_eq!(rm3.get(&[1, 1]), c(6.0, 0.0));
        let rm2 = wick_predict(&md, 2).unwrap();
        assert_eq!(rm2.get(&[1]), c(2.0, 0.0));
        let rec = extract_m(&rm3, Some(&rm2), &[], &ExtractMConfig::default()).unwrap();
        assert!((rec.m[(1, 1)] - c(3.0, 0.0)).norm() < 1e-14);
        assert!((rec.m[(1, 0)] - c(2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn toy_wick_four_point() {
        let rm4 = wick_predict(&toy_md(), 4).unwrap();
        assert_eq!(rm4.get(&[1, 1, 1]), c(18.0, 0.0));
    }

    #[test]
    fn scalar_model() {
        let md = MdModel {
            poles: vec![c(0.0, 0.0)],
            m: linalg::from_real_rows(&[&[1.0]]),
            mhat11: 0.25,
            kappa: 1,
            symmetry_defect: 0.0,
            unknown: Vec::new(),
        };
        let rx = extract_r(&md, DEFAULT_PAIRING_TOL).unwrap();
        assert!((rx.r[0] - c(0.5, 0.0)).norm() < 1e-15);
        let qx = extract_q(&md, &rx, 1e-8).unwrap();
        assert!((qx.q[(0, 0)] - c(-0.125, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn pairing_example() {
        // r = (1, 2i): products conj(r_a) r_b = {1, 2i, −2i, 4}
        let values = [c(1.0, 0.0), c(0.0, 2.0), c(0.0, -2.0), c(4.0, 0.0)];
        let r = [c(1.0, 0.0), c(0.0, 2.0)];
        let (cost, _) = assign_products(&r, &values, 4.0);
        assert!(cost < 1e-15);
    }

    #[test]
    fn combinations_enumerated() {
        let mut seen = Vec::new();
        for_each_combination(4, 2, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[5], vec![2, 3]);
        let mut empty = 0;
        for_each_combination(3, 0, |_| empty += 1);
        assert_eq!(empty, 1);
    }

    #[test]
    fn kron_sum_readout() {
        let q = linalg::from_real_rows(&[&[-1.0, 2.0], &[0.0, -2.0]]);
        let s = kron_sum(&q);
        assert_eq!(linalg::diagonal(&s), vec![c(-2.0, 0.0), c(-3.0, 0.0), c(-3.0, 0.0), c(-4.0, 0.0)]);
        assert_eq!(s[(0, 1)], c(2.0, 0.0));
        let u = kronecker_rescaling(&s, 2);
        assert!(u.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));
    }

    #[test]
    fn pole_matching() {
        let a = [c(0.0, 0.0), c(-1.0, 2.0), c(-1.0, -2.0)];
        let b = [c(-1.0, -2.0 + 1e-6), c(1e-9, 0.0), c(-1.0, 2.0)];
        assert_eq!(match_poles(&a, &b, 1e-3).unwrap(), vec![1, 2, 0]);
        let far = [c(0.0, 0.0), c(-1.0, 2.0), c(-3.0, 0.0)];
        assert!(matches!(match_poles(&a, &far, 1e-3), Err(Error::PoleMismatch { .. })));
    }
}
