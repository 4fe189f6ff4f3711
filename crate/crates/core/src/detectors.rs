//! Uplink receive processing: exhaustive ML, linear RMF/ZF/MMSE filters,
//! one-shot decision feedback and ordered successive interference
//! cancellation.
//!
//! Filters are stored as `W` (`N_A x K N_U`) and applied as `W^H r`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // shadowed by std inherent methods when std is linked
use num_traits::Float;
use crate::modem::{self, qpsk_point};
use crate::numerics::{dot_conj_right, Cholesky, Complex, ComplexMatrix};
use crate::Error;

/// Default cap on `4^(K N_U)` for exhaustive ML detection.
pub const ML_DEFAULT_CAP: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq)]
pub struct ReceiveFilterSet {
    /// Feedforward filter, `N_A x K N_U`.
    pub w: ComplexMatrix,
    /// Matrix applied to prior decisions (the `F^H` of the DF receiver);
    /// strictly lower triangular in detection order.
    pub feedback: Option<ComplexMatrix>,
    /// Detection order (SIC only).
    pub ordering: Option<Vec<usize>>,
}

/// Loading used in the MMSE filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MmseLoading {
    /// `sigma_n^2 / sigma_s^2`.
    #[default]
    Standard,
    /// `sigma_s^2 / sigma_n^2`, as the formula is sometimes printed.
    Inverted,
}

impl MmseLoading {
    pub fn value(self, sigma_s2: f64, sigma_n2: f64) -> f64 {
        match self {
            MmseLoading::Standard => sigma_n2 / sigma_s2,
            MmseLoading::Inverted => sigma_s2 / sigma_n2,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SicOrdering {
    /// Highest post-MMSE SINR first (smallest diagonal of the error
    /// covariance); ties go to the lower stream index.
    #[default]
    Sinr,
    Natural,
}

/// `ŝ = argmin_s ||r - H s||^2` over all QPSK vectors, in lexicographic
/// order (stream 0 most significant); the first minimum wins.
pub fn ml_detect(r: &[Complex], h: &ComplexMatrix, cap: u64) -> Result<Vec<Complex>, Error> {
    Ok(ml_detect_indices(r, h, cap)?.into_iter().map(qpsk_point).collect())
}

pub fn ml_candidates(streams: usize) -> f64 {
    4f64.powi(streams as i32)
}

pub fn ml_detect_indices(r: &[Complex], h: &ComplexMatrix, cap: u64) -> Result<Vec<u8>, Error> {
    let (n, m) = h.shape();
    if r.len() != n {
        return Err(Error::LengthMismatch { left: n, right: r.len() });
    }
    let candidates = ml_candidates(m);
    if candidates > cap as f64 {
        return Err(Error::SearchSpaceTooLarge { candidates, cap, hint: "ML detection needs fewer streams" });
    }
    let cols: Vec<Vec<Complex>> = (0..m).map(|j| h.column(j)).collect();
    let mut idx = vec![0u8; m];
    let mut best = idx.clone();
    let mut best_obj = f64::INFINITY;
    let mut resid = vec![Complex::new(0.0, 0.0); n];
    loop {
        resid.copy_from_slice(r);
        for (col, &i) in cols.iter().zip(&idx) {
            let s = qpsk_point(i);
            for (x, hc) in resid.iter_mut().zip(col) {
                *x -= hc * s;
            }
        }
        let obj: f64 = resid.iter().map(|z| z.norm_sqr()).sum();
        if obj < best_obj {
            best_obj = obj;
            best.copy_from_slice(&idx);
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            if idx[pos] < 3 {
                idx[pos] += 1;
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Receive matched filter, `W = H`.
pub fn rmf_filter(h: &ComplexMatrix) -> ReceiveFilterSet {
    ReceiveFilterSet { w: h.clone(), feedback: None, ordering: None }
}

/// `W = H (H^H H + delta I)^{-1}`, the push-through form of
/// `(H H^H + delta I)^{-1} H`; only a `K N_U` square system is factored.
pub fn mmse_filter_loaded(h: &ComplexMatrix, delta: f64) -> Result<ReceiveFilterSet, Error> {
    let mut gram = h.hermitian_matmul(h)?;
    gram.add_diagonal(delta);
    let inv = Cholesky::new(&gram)?.inverse();
    Ok(ReceiveFilterSet { w: h.matmul(&inv)?, feedback: None, ordering: None })
}

pub fn mmse_filter(h: &ComplexMatrix, sigma_s2: f64, sigma_n2: f64) -> Result<ReceiveFilterSet, Error> {
    if !(sigma_n2 > 0.0 && sigma_s2 > 0.0) {
        return Err(Error::Invalid { field: "sigma_n2", constraint: format!("noise and symbol variances must be > 0, got {sigma_n2}, {sigma_s2}") });
    }
    mmse_filter_loaded(h, MmseLoading::Standard.value(sigma_s2, sigma_n2))
}

/// Pseudo-inverse form `W = H (H^H H)^{-1}`, so that `W^H H = I`.
pub fn zf_filter(h: &ComplexMatrix) -> Result<ReceiveFilterSet, Error> {
    mmse_filter_loaded(h, 0.0)
}

/// `ŝ = Q(W^H r)`, or with feedback, `ŝ = Q(W^H r - F^H ŝ_o)` with
/// `ŝ_o = Q(W^H r)`.
pub fn linear_detect(filters: &ReceiveFilterSet, r: &[Complex]) -> Result<Vec<Complex>, Error> {
    let w = &filters.w;
    if r.len() != w.rows() {
        return Err(Error::LengthMismatch { left: w.rows(), right: r.len() });
    }
    let z = w.hermitian_matmul(&ComplexMatrix::column_vector(r))?.into_vec();
    let initial: Vec<Complex> = z.iter().map(|&v| modem::slice(v)).collect();
    match &filters.feedback {
        None => Ok(initial),
        Some(fb) => {
            let correction = fb.mul_vec(&initial)?;
            Ok(z.iter().zip(&correction).map(|(a, b)| modem::slice(a - b)).collect())
        }
    }
}

/// One-shot decision feedback on the full channel: MMSE feedforward and
/// feedback equal to the strictly lower part of `W^H H`.
pub fn df_filter(h: &ComplexMatrix, sigma_s2: f64, sigma_n2: f64) -> Result<ReceiveFilterSet, Error> {
    let mut set = mmse_filter(h, sigma_s2, sigma_n2)?;
    let whh = set.w.hermitian_matmul(h)?;
    let m = whh.rows();
    let fb = ComplexMatrix::from_fn(m, m, |i, j| if j < i { whh[(i, j)] } else { Complex::new(0.0, 0.0) });
    set.feedback = Some(fb);
    Ok(set)
}

/// Ordered MMSE-SIC with filter recomputation after every cancellation.
///
/// The stage filters depend only on the channel and the noise level, so
/// they are computed once per packet; [`SicDetector::detect`] then runs the
/// cancellation loop per channel use.
#[derive(Clone, Debug)]
pub struct SicDetector {
    order: Vec<usize>,
    /// Stage filters in detection order.
    stage_filters: Vec<Vec<Complex>>,
    /// Channel columns in detection order.
    stage_columns: Vec<Vec<Complex>>,
    n_a: usize,
}

impl SicDetector {
    pub fn new(
        h: &ComplexMatrix,
        sigma_s2: f64,
        sigma_n2: f64,
        ordering: SicOrdering,
    ) -> Result<Self, Error> {
        if !(sigma_n2 > 0.0 && sigma_s2 > 0.0) {
            return Err(Error::Invalid { field: "sigma_n2", constraint: format!("noise and symbol variances must be > 0, got {sigma_n2}, {sigma_s2}") });
        }
        Self::with_loading(h, MmseLoading::Standard.value(sigma_s2, sigma_n2), ordering)
    }

    pub fn with_loading(h: &ComplexMatrix, delta: f64, ordering: SicOrdering) -> Result<Self, Error> {
        let (n_a, m) = h.shape();
        let cols: Vec<Vec<Complex>> = (0..m).map(|j| h.column(j)).collect();
        let full_gram = h.hermitian_matmul(h)?;
        let mut remaining: Vec<usize> = (0..m).collect();
        let mut order = Vec::with_capacity(m);
        let mut stage_filters = Vec::with_capacity(m);
        while !remaining.is_empty() {
            let mut g = full_gram.select(&remaining, &remaining);
            g.add_diagonal(delta);
            let chol = Cholesky::new(&g)?;
            let pick = match ordering {
                SicOrdering::Natural => 0,
                SicOrdering::Sinr => {
                    let diag = chol.inverse_diagonal();
                    let mut best = 0;
                    for (i, &d) in diag.iter().enumerate() {
                        if d < diag[best] {
                            best = i;
                        }
                    }
                    best
                }
            };
            let mut e = vec![Complex::new(0.0, 0.0); remaining.len()];
            e[pick] = Complex::new(1.0, 0.0);
            let coef = chol.solve_vec(&e)?;
            // w = H_rem (G_rem + delta I)^{-1} e_pick
            let mut w = vec![Complex::new(0.0, 0.0); n_a];
            for (&j, &cf) in remaining.iter().zip(&coef) {
                for (wi, hij) in w.iter_mut().zip(&cols[j]) {
                    *wi += hij * cf;
                }
            }
            order.push(remaining.remove(pick));
            stage_filters.push(w);
        }
        let stage_columns = order.iter().map(|&j| cols[j].clone()).collect();
        Ok(Self { order, stage_filters, stage_columns, n_a })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// The stage filters placed at their stream's column, with the order.
    pub fn filters(&self) -> ReceiveFilterSet {
        let m = self.order.len();
        let mut w = ComplexMatrix::zeros(self.n_a, m);
        for (f, &j) in self.stage_filters.iter().zip(&self.order) {
            for (i, v) in f.iter().enumerate() {
                w[(i, j)] = *v;
            }
        }
        ReceiveFilterSet { w, feedback: None, ordering: Some(self.order.clone()) }
    }

    /// Detected symbol indices in original stream order.
    pub fn detect_indices(&self, r: &[Complex], scratch: &mut Vec<Complex>, out: &mut [u8]) {
        scratch.clear();
        scratch.extend_from_slice(r);
        for ((f, col), &j) in self.stage_filters.iter().zip(&self.stage_columns).zip(&self.order) {
            let z = dot_conj_right(scratch, f);
            let idx = modem::slice_index(z);
            out[j] = idx;
            let s = qpsk_point(idx);
            for (x, h) in scratch.iter_mut().zip(col) {
                *x -= h * s;
            }
        }
    }

    pub fn detect(&self, r: &[Complex]) -> Result<Vec<Complex>, Error> {
        if r.len() != self.n_a {
            return Err(Error::LengthMismatch { left: self.n_a, right: r.len() });
        }
        let mut out = vec![0u8; self.order.len()];
        let mut scratch = Vec::with_capacity(r.len());
        self.detect_indices(r, &mut scratch, &mut out);
        Ok(out.into_iter().map(qpsk_point).collect())
    }
}

pub fn sic_detect(
    h: &ComplexMatrix,
    r: &[Complex],
    sigma_s2: f64,
    sigma_n2: f64,
    ordering: SicOrdering,
) -> Result<Vec<Complex>, Error> {
    SicDetector::new(h, sigma_s2, sigma_n2, ordering)?.detect(r)
}
