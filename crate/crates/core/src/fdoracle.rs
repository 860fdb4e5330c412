//! Finite-difference eigenvalue oracle for `-d^2/dx^2 + V` on `[0, L]`.
//!
//! Second-order central differences on nodes `x_j = j h`. The condition at
//! `x = 0` is imposed through its Robin part (see
//! [`BoundaryPair::robin_part`]): `psi(0) = U y` and a ghost node carries
//! `U^dagger psi'(0) = L y`. Scaling the first block by `sqrt 2` makes the
//! matrix Hermitian. A Dirichlet condition closes the interval at `x = L`.
//!
//! Negative eigenvalues are found by spectrum slicing: the number of
//! eigenvalues below `sigma` is the number of negative pivots of a banded
//! `L D L^dagger` factorization of `H - sigma`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matcore::{cplx, CMat};
use crate::model::{BoundaryPair, PotentialGrid};

/// Controls for [`oracle_negative_spectrum`].
#[derive(Clone, Debug, PartialEq)]
pub struct OracleOptions {
    /// Eigenvalues above `-eps_edge` are not reported.
    pub eps_edge: f64,
    /// Eigenvalues closer than `cluster_rel * |lambda|` form one cluster.
    pub cluster_rel: f64,
    /// Absolute bisection width.
    pub eig_tol: f64,
    /// Combine the runs at `h` and `h/2` as `(4 lambda_{h/2} - lambda_h) / 3`.
    pub richardson: bool,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { eps_edge: 1e-4, cluster_rel: 1e-6, eig_tol: 1e-11, richardson: false }
    }
}

/// Finite-difference matrix in Hermitian banded storage.
#[derive(Clone, Debug)]
pub struct DiscretizedOperator {
    l: f64,
    h: f64,
    robin_rank: usize,
    dim: usize,
    bw: usize,
    /// Row `i` holds `H[i][i - k]` at `i * (bw + 1) + k`.
    band: Vec<Complex64>,
}

impl DiscretizedOperator {
    /// Discretizes `H_{A,B}(V)` on `[0, l]` with spacing close to `h`.
    pub fn new(v: &PotentialGrid, bc: &BoundaryPair, l: f64, h: f64) -> Result<Self> {
        if bc.dim() != v.n() {
            return Err(Error::DimensionMismatch { expected: v.n(), found: bc.dim() });
        }
        if !(h > 0.0 && l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("need L > 0 and h > 0, got L = {l}, h = {h}")));
        }
        let nodes = (l / h).round().max(2.0) as usize;
        let h = l / nodes as f64;
        let n = v.n();
        let (u, lr) = bc.robin_part();
        let r = u.ncols();
        let dim = r + n * (nodes - 1);
        let bw = n.max(r + n - 1).max(1);
        let mut op = DiscretizedOperator {
            l,
            h,
            robin_rank: r,
            dim,
            bw,
            band: vec![cplx(0.0, 0.0); dim * (bw + 1)],
        };

        let inv_h2 = 1.0 / (h * h);
        let v0 = v.average_over(0.0, 0.5 * h);
        let h00 = CMat::identity(r, r) * cplx(2.0 * inv_h2, 0.0) + &lr * cplx(2.0 / h, 0.0)
            + u.adjoint() * v0 * &u;
        for a in 0..r {
            for b in 0..=a {
                op.set(a, b, h00[(a, b)]);
            }
        }
        // Coupling of node 0 (reduced coordinates) to node 1.
        let c01 = u.adjoint() * cplx(-(2f64.sqrt()) * inv_h2, 0.0);
        for a in 0..r {
            for c in 0..n {
                op.set(r + c, a, c01[(a, c)].conj());
            }
        }
        for j in 1..nodes {
            let base = r + (j - 1) * n;
            let x = j as f64 * h;
            let vj = v.average_over(x - 0.5 * h, x + 0.5 * h);
            for a in 0..n {
                for b in 0..=a {
                    let mut e = vj[(a, b)];
                    if a == b {
                        e += 2.0 * inv_h2;
                    }
                    op.set(base + a, base + b, e);
                }
                if j + 1 < nodes {
                    op.set(base + n + a, base + a, cplx(-inv_h2, 0.0));
                }
            }
        }
        Ok(op)
    }

    fn set(&mut self, i: usize, j: usize, value: Complex64) {
        debug_assert!(i >= j && i - j <= self.bw);
        self.band[i * (self.bw + 1) + (i - j)] = value;
    }

    fn get(&self, i: usize, j: usize) -> Complex64 {
        self.band[i * (self.bw + 1) + (i - j)]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn length(&self) -> f64 {
        self.l
    }

    /// Actual spacing (`L` divided by the node count).
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn robin_rank(&self) -> usize {
        self.robin_rank
    }

    /// Dense copy; for small checks only.
    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for j in i.saturating_sub(self.bw)..=i {
                let e = self.get(i, j);
                m[(i, j)] = e;
                m[(j, i)] = e.conj();
            }
        }
        m
    }

    /// Lower bound on the spectrum from Gershgorin discs.
    pub fn gershgorin_lower(&self) -> f64 {
        let mut radius = vec![0.0; self.dim];
        for i in 0..self.dim {
            for j in i.saturating_sub(self.bw)..i {
                let a = self.get(i, j).norm();
                radius[i] += a;
                radius[j] += a;
            }
        }
        (0..self.dim).map(|i| self.get(i, i).re - radius[i]).fold(f64::INFINITY, f64::min)
    }

    /// Number of eigenvalues below `sigma`, by Sylvester inertia of the
    /// banded `L D L^dagger` factorization of `H - sigma`.
    pub fn count_below(&self, sigma: f64, work: &mut Vec<Complex64>) -> usize {
        let w = self.bw + 1;
        work.clear();
        work.extend_from_slice(&self.band);
        let mut d = vec![0.0_f64; self.dim];
        let tiny = f64::EPSILON * (4.0 / (self.h * self.h) + sigma.abs());
        let mut negatives = 0;
        for i in 0..self.dim {
            let lo = i.saturating_sub(self.bw);
            for j in lo..i {
                let mut s = work[i * w + (i - j)];
                for t in lo.max(j.saturating_sub(self.bw))..j {
                    s -= work[i * w + (i - t)] * work[j * w + (j - t)].conj() * d[t];
                }
                work[i * w + (i - j)] = s / d[j];
            }
            let mut di = work[i * w].re - sigma;
            for t in lo..i {
                di -= work[i * w + (i - t)].norm_sqr() * d[t];
            }
            if di.abs() < tiny {
                di = -tiny;
            }
            if di < 0.0 {
                negatives += 1;
            }
            d[i] = di;
        }
        negatives
    }

    /// Eigenvalues below `upper`, repeated by multiplicity, ascending.
    pub fn eigenvalues_below(&self, upper: f64, tol: f64) -> Vec<f64> {
        let mut work = Vec::new();
        let lower = self.gershgorin_lower().min(upper) - 1.0;
        let c_hi = self.count_below(upper, &mut work);
        let mut out = Vec::with_capacity(c_hi);
        self.slice(lower, upper, 0, c_hi, tol, &mut work, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn slice(
        &self,
        lo: f64,
        hi: f64,
        c_lo: usize,
        c_hi: usize,
        tol: f64,
        work: &mut Vec<Complex64>,
        out: &mut Vec<f64>,
    ) {
        if c_hi == c_lo {
            return;
        }
        let mid = 0.5 * (lo + hi);
        if hi - lo < tol {
            out.extend(std::iter::repeat_n(mid, c_hi - c_lo));
            return;
        }
        let c_mid = self.count_below(mid, work);
        self.slice(lo, mid, c_lo, c_mid, tol, work, out);
        self.slice(mid, hi, c_mid, c_hi, tol, work, out);
    }
}

/// Negative eigenvalues reported by the oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleSpectrum {
    /// `(lambda, multiplicity)`, ascending.
    pub eigenvalues: Vec<(f64, usize)>,
    pub length: f64,
    pub h: f64,
    pub richardson: bool,
}

impl OracleSpectrum {
    pub fn count(&self) -> usize {
        self.eigenvalues.iter().map(|e| e.1).sum()
    }

    /// Eigenvalues repeated by multiplicity, ascending.
    pub fn expanded(&self) -> Vec<f64> {
        self.eigenvalues.iter().flat_map(|&(l, m)| std::iter::repeat_n(l, m)).collect()
    }
}

fn cluster(values: &[f64], rel: f64) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize, f64)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((_, count, sum)) if (v - *sum / *count as f64).abs() <= rel * v.abs().max(1e-12) => {
                *count += 1;
                *sum += v;
            }
            _ => out.push((v, 1, v)),
        }
    }
    out.into_iter().map(|(_, c, s)| (s / c as f64, c)).collect()
}

/// Truncation length covering `factor` decay lengths of the shallowest
/// expected state and four times the support.
pub fn suggested_length(v: &PotentialGrid, kappa_min: f64) -> f64 {
    (4.0 * v.x_max()).max(10.0 / kappa_min).max(1.0)
}

/// Negative eigenvalues below `-eps_edge` of `H_{A,B}(V)` truncated to
/// `[0, l]` with a Dirichlet end, clustered into multiplicities.
pub fn oracle_negative_spectrum(
    v: &PotentialGrid,
    bc: &BoundaryPair,
    l: f64,
    h: f64,
    opts: &OracleOptions,
) -> Result<OracleSpectrum> {
    if l < 4.0 * v.x_max() {
        return Err(Error::Precondition(format!(
            "truncation length {l} is below four times the support {}",
            v.x_max()
        )));
    }
    if h * h * v.sup_norm() >= 0.1 {
        return Err(Error::Precondition(format!("h = {h} is too coarse for |V| = {}", v.sup_norm())));
    }
    let run = |h: f64| -> Result<(Vec<f64>, f64)> {
        let op = DiscretizedOperator::new(v, bc, l, h)?;
        Ok((op.eigenvalues_below(-opts.eps_edge, opts.eig_tol), op.h()))
    };
    let (coarse, h_used) = run(h)?;
    let mut values = coarse.clone();
    let mut richardson = false;
    if opts.richardson {
        let (fine, _) = run(0.5 * h)?;
        if fine.len() == coarse.len() {
            values = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
            richardson = true;
        } else {
            values = fine;
        }
    }
    Ok(OracleSpectrum {
        eigenvalues: cluster(&values, opts.cluster_rel),
        length: l,
        h: h_used,
        richardson,
    })
}
