//! Interior-point backend for moment-style semidefinite programs.
//!
//! Solves `min c'y s.t. F0_k + sum_v y_v F_vk >= 0` (several PSD blocks plus
//! scalar rows) with an infeasible-start HKM predictor-corrector. The Schur
//! complement is assembled from the sparse cell lists of each block; variables
//! local to a single block are eliminated blockwise, so programs whose blocks
//! share only a few variables (one clique per quadrature node) factor in
//! block-arrow form instead of one dense system.
//!
//! Second-order cones and equality rows are not handled here; the registry
//! routes such programs to a general-purpose backend.

use super::solver::{
    AffineRow, ConicProgram, ConicSolver, SolverConfig, SolverError, SolverSolution, SolverStatus,
};
use nalgebra::DMatrix;
use rayon::prelude::*;

#[derive(Debug, Default, Clone)]
pub struct HkmSolver;

/// Dense symmetric matrix in row-major storage.
#[derive(Clone)]
struct Sym {
    d: usize,
    a: Vec<f64>,
}

impl Sym {
    fn zeros(d: usize) -> Self {
        Sym { d, a: vec![0.0; d * d] }
    }

    fn eye(d: usize, scale: f64) -> Self {
        let mut m = Sym::zeros(d);
        for i in 0..d {
            m.a[i * d + i] = scale;
        }
        m
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.d + c]
    }

    fn symmetrize(&mut self) {
        let d = self.d;
        for r in 0..d {
            for c in (r + 1)..d {
                let v = 0.5 * (self.a[r * d + c] + self.a[c * d + r]);
                self.a[r * d + c] = v;
                self.a[c * d + r] = v;
            }
        }
    }

    fn add_scaled(&mut self, other: &Sym, t: f64) {
        for (a, b) in self.a.iter_mut().zip(&other.a) {
            *a += t * b;
        }
    }

    fn dot(&self, other: &Sym) -> f64 {
        self.a.iter().zip(&other.a).map(|(x, y)| x * y).sum()
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.a)
    }

    fn cholesky_ok(&self) -> bool {
        self.to_dmatrix().cholesky().is_some()
    }

    fn inverse_psd(&self) -> Option<Sym> {
        let inv = self.to_dmatrix().cholesky()?.inverse();
        Some(Sym { d: self.d, a: inv.transpose().as_slice().to_vec() })
    }
}

/// One PSD block with sparse per-variable cell lists.
struct Block {
    dim: usize,
    f0: Sym,
    /// (var, cells) with cells = (r, c, coeff), r <= c.
    vars: Vec<(usize, Vec<(u32, u32, f64)>)>,
}

impl Block {
    fn smat(&self, y: &[f64]) -> Sym {
        let d = self.dim;
        let mut s = self.f0.clone();
        for (v, cells) in &self.vars {
            let yv = y[*v];
            for &(r, c, co) in cells {
                let (r, c) = (r as usize, c as usize);
                s.a[r * d + c] += co * yv;
                if r != c {
                    s.a[c * d + r] += co * yv;
                }
            }
        }
        s
    }

    /// <F_v, M> for every variable of this block (full symmetric pairing).
    fn inner_all(&self, m: &Sym, out: &mut [f64]) {
        for (idx, (_, cells)) in self.vars.iter().enumerate() {
            let mut acc = 0.0;
            for &(r, c, co) in cells {
                let (r, c) = (r as usize, c as usize);
                acc += co
                    * if r == c {
                        m.at(r, c)
                    } else {
                        m.at(r, c) + m.at(c, r)
                    };
            }
            out[idx] = acc;
        }
    }
}

struct Workspace {
    n: usize,
    blocks: Vec<Block>,
    diag_rows: Vec<AffineRow>,
    c: Vec<f64>,
    shared: Vec<usize>,
    locals: Vec<Vec<usize>>, // per block, global ids of its local vars
}

fn build_workspace(p: &ConicProgram) -> Workspace {
    let n = p.n_vars;
    let mut c = vec![0.0; n];
    for &(v, co) in &p.objective {
        c[v] += co;
    }
    let mut blocks = Vec::with_capacity(p.psd_blocks.len());
    let mut appears: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, spec) in p.psd_blocks.iter().enumerate() {
        let mut f0 = Sym::zeros(spec.dim);
        for &(r, c0, v) in &spec.const_tri {
            f0.a[r * spec.dim + c0] = v;
            f0.a[c0 * spec.dim + r] = v;
        }
        let mut per_var: std::collections::BTreeMap<usize, Vec<(u32, u32, f64)>> =
            std::collections::BTreeMap::new();
        for &(var, r, c0, co) in &spec.var_tri {
            per_var.entry(var).or_default().push((r as u32, c0 as u32, co));
        }
        for v in per_var.keys() {
            if appears[*v].last() != Some(&k) {
                appears[*v].push(k);
            }
        }
        blocks.push(Block { dim: spec.dim, f0, vars: per_var.into_iter().collect() });
    }
    // vars referenced by multi-variable scalar rows must stay shared
    let mut force_shared = vec![false; n];
    for row in &p.nonneg {
        if row.terms.len() > 1 {
            for &(v, _) in &row.terms {
                force_shared[v] = true;
            }
        }
        for &(v, _) in &row.terms {
            if appears[v].is_empty() {
                force_shared[v] = true;
            }
        }
    }
    let mut shared = Vec::new();
    let mut locals: Vec<Vec<usize>> = vec![Vec::new(); blocks.len()];
    for v in 0..n {
        if appears[v].len() == 1 && !force_shared[v] {
            let k = appears[v][0];
            locals[k].push(v);
        } else {
            shared.push(v);
        }
    }
    Workspace { n, blocks, diag_rows: p.nonneg.clone(), c, shared, locals }
}

/// Largest step alpha in (0, 1] keeping M + alpha*D positive definite,
/// located by Cholesky bisection.
fn max_step(m: &Sym, d: &Sym) -> f64 {
    let trial = |alpha: f64| -> bool {
        let mut t = m.clone();
        t.add_scaled(d, alpha);
        t.cholesky_ok()
    };
    if trial(1.0) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        if trial(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn max_step_scalar(x: &[f64], dx: &[f64]) -> f64 {
    let mut alpha: f64 = 1.0;
    for (v, d) in x.iter().zip(dx) {
        if *d < 0.0 {
            alpha = alpha.min(-v / d * 0.9999);
        }
    }
    alpha.clamp(0.0, 1.0)
}

struct Iterate {
    y: Vec<f64>,
    s: Vec<Sym>,
    x: Vec<Sym>,
    sd: Vec<f64>,
    xd: Vec<f64>,
}

struct Direction {
    dy: Vec<f64>,
    ds: Vec<Sym>,
    dx: Vec<Sym>,
    dsd: Vec<f64>,
    dxd: Vec<f64>,
}

impl HkmSolver {
    fn run(&self, p: &ConicProgram, cfg: &SolverConfig) -> SolverSolution {
        let ws = build_workspace(p);
        let n = ws.n;
        let nrows = ws.diag_rows.len();
        let total_dim: usize = ws.blocks.iter().map(|b| b.dim).sum::<usize>() + nrows;

        // infeasible start: S = F(0) shifted to be safely positive definite
        let mut it = Iterate {
            y: vec![0.0; n],
            s: Vec::new(),
            x: Vec::new(),
            sd: Vec::with_capacity(nrows),
            xd: vec![1.0; nrows],
        };
        for b in &ws.blocks {
            let base = b.smat(&it.y);
            let mut shift = 1.0;
            loop {
                let mut t = base.clone();
                t.add_scaled(&Sym::eye(b.dim, 1.0), shift);
                if t.cholesky_ok() {
                    it.s.push(t);
                    break;
                }
                shift *= 4.0;
            }
            it.x.push(Sym::eye(b.dim, 1.0));
        }
        for row in &ws.diag_rows {
            it.sd.push(row.eval(&it.y).max(1.0));
        }

        let mut best: Option<(f64, SolverSolution)> = None;
        let mut stall = 0usize;
        for iter in 0..cfg.max_iter {
            // factorizations and residuals
            let sinv: Vec<Sym> = match it
                .s
                .iter()
                .map(|s| s.inverse_psd())
                .collect::<Option<Vec<_>>>()
            {
                Some(v) => v,
                None => {
                    return self.finish(best, SolverStatus::NumericalFailure,
                        "S factorization failed", iter, p, &ws, &it);
                }
            };
            let mut r_stat = ws.c.clone();
            for (k, b) in ws.blocks.iter().enumerate() {
                let mut tmp = vec![0.0; b.vars.len()];
                b.inner_all(&it.x[k], &mut tmp);
                for ((v, _), inner) in b.vars.iter().zip(&tmp) {
                    r_stat[*v] -= inner;
                }
            }
            for (j, row) in ws.diag_rows.iter().enumerate() {
                for &(v, co) in &row.terms {
                    r_stat[v] -= co * it.xd[j];
                }
            }
            let rd_blocks: Vec<Sym> = ws
                .blocks
                .iter()
                .zip(&it.s)
                .map(|(b, s)| {
                    let mut m = b.smat(&it.y);
                    m.add_scaled(s, -1.0);
                    m
                })
                .collect();
            let rd_diag: Vec<f64> = ws
                .diag_rows
                .iter()
                .zip(&it.sd)
                .map(|(row, s)| row.eval(&it.y) - s)
                .collect();

            let gap: f64 = it.x.iter().zip(&it.s).map(|(x, s)| x.dot(s)).sum::<f64>()
                + it.xd.iter().zip(&it.sd).map(|(x, s)| x * s).sum::<f64>();
            let mu = gap / total_dim as f64;
            let pobj = p.offset + ws.c.iter().zip(&it.y).map(|(c, y)| c * y).sum::<f64>();
            let dobj = p.offset
                - ws.blocks.iter().zip(&it.x).map(|(b, x)| b.f0.dot(x)).sum::<f64>()
                - ws.diag_rows.iter().zip(&it.xd).map(|(r, x)| r.constant * x).sum::<f64>();
            let relgap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
            let rp = r_stat.iter().map(|v| v.abs()).fold(0.0, f64::max)
                / (1.0 + ws.c.iter().map(|v| v.abs()).fold(0.0, f64::max));
            let rd = rd_blocks
                .iter()
                .map(|m| m.a.iter().map(|v| v.abs()).fold(0.0, f64::max))
                .chain(rd_diag.iter().map(|v| v.abs()))
                .fold(0.0, f64::max);
            if cfg.verbose {
                eprintln!(
                    "hkm it={iter} pobj={pobj:+.9e} dobj={dobj:+.9e} gap={relgap:.2e} rp={rp:.2e} rd={rd:.2e} mu={mu:.2e}"
                );
            }
            let score = relgap.max(rp).max(rd);
            let better = best.as_ref().map(|(s, _)| score < *s).unwrap_or(true);
            if better {
                let sol = self.snapshot(p, &ws, &it, pobj, dobj, iter, SolverStatus::NearOptimal);
                best = Some((score, sol));
                stall = 0;
            } else {
                stall += 1;
            }
            if relgap <= cfg.gap_tol && rp <= cfg.feas_tol && rd <= cfg.feas_tol {
                let mut sol = self.snapshot(p, &ws, &it, pobj, dobj, iter, SolverStatus::Optimal);
                sol.message = format!("converged in {iter} iterations");
                return sol;
            }
            if stall > 12 {
                break;
            }
            // infeasibility certificate: a dual ray
            let xnorm: f64 = it.x.iter().map(|x| x.dot(x)).sum::<f64>().sqrt()
                + it.xd.iter().map(|v| v * v).sum::<f64>().sqrt();
            if xnorm > 1e9 {
                let stat_ray = r_stat
                    .iter()
                    .zip(&ws.c)
                    .map(|(r, c)| (c - r).abs())
                    .fold(0.0, f64::max)
                    / xnorm;
                let ray_obj = (dobj - p.offset) / xnorm;
                if stat_ray < 1e-8 && ray_obj > 1e-10 {
                    return self.finish(best, SolverStatus::Infeasible,
                        "dual improving ray found", iter, p, &ws, &it);
                }
            }

            // Schur complement over the symmetrized HKM system
            let schur = match SchurSystem::build(&ws, &sinv, &it) {
                Some(s) => s,
                None => {
                    return self.finish(best, SolverStatus::NumericalFailure,
                        "Schur factorization failed", iter, p, &ws, &it);
                }
            };

            let assemble_rhs = |sigma_mu: f64, corr: Option<&Direction>| -> Vec<f64> {
                let mut rhs = vec![0.0; n];
                for (v, r) in r_stat.iter().enumerate() {
                    rhs[v] = -r;
                }
                for (k, b) in ws.blocks.iter().enumerate() {
                    // M = sigma*mu*Sinv - X - X*Rd*Sinv  (- DXaff*DSaff*Sinv)
                    let d = b.dim;
                    let mut m = sinv[k].clone();
                    for v in m.a.iter_mut() {
                        *v *= sigma_mu;
                    }
                    m.add_scaled(&it.x[k], -1.0);
                    let xrd = mat_mul(&it.x[k], &rd_blocks[k]);
                    let xrdsi = mat_mul(&xrd, &sinv[k]);
                    m.add_scaled(&xrdsi, -1.0);
                    if let Some(aff) = corr {
                        let dd = mat_mul(&aff.dx[k], &aff.ds[k]);
                        let ddsi = mat_mul(&dd, &sinv[k]);
                        m.add_scaled(&ddsi, -1.0);
                    }
                    let _ = d;
                    let mut tmp = vec![0.0; b.vars.len()];
                    b.inner_all(&m, &mut tmp);
                    for ((v, _), inner) in b.vars.iter().zip(&tmp) {
                        rhs[*v] += inner;
                    }
                }
                for (j, row) in ws.diag_rows.iter().enumerate() {
                    let mut m = sigma_mu / it.sd[j] - it.xd[j]
                        - it.xd[j] * rd_diag[j] / it.sd[j];
                    if let Some(aff) = corr {
                        m -= aff.dxd[j] * aff.dsd[j] / it.sd[j];
                    }
                    for &(v, co) in &row.terms {
                        rhs[v] += co * m;
                    }
                }
                rhs
            };

            let direction = |dy: Vec<f64>, sigma_mu: f64, corr: Option<&Direction>| -> Direction {
                let mut ds = Vec::with_capacity(ws.blocks.len());
                let mut dx = Vec::with_capacity(ws.blocks.len());
                for (k, b) in ws.blocks.iter().enumerate() {
                    let mut dsk = rd_blocks[k].clone();
                    for (v, cells) in &b.vars {
                        let dyv = dy[*v];
                        for &(r, c, co) in cells {
                            let (r, c) = (r as usize, c as usize);
                            dsk.a[r * b.dim + c] += co * dyv;
                            if r != c {
                                dsk.a[c * b.dim + r] += co * dyv;
                            }
                        }
                    }
                    let mut m = sinv[k].clone();
                    for v in m.a.iter_mut() {
                        *v *= sigma_mu;
                    }
                    m.add_scaled(&it.x[k], -1.0);
                    let xds = mat_mul(&it.x[k], &dsk);
                    let xdssi = mat_mul(&xds, &sinv[k]);
                    m.add_scaled(&xdssi, -1.0);
                    if let Some(aff) = corr {
                        let dd = mat_mul(&aff.dx[k], &aff.ds[k]);
                        let ddsi = mat_mul(&dd, &sinv[k]);
                        m.add_scaled(&ddsi, -1.0);
                    }
                    m.symmetrize();
                    ds.push(dsk);
                    dx.push(m);
                }
                let mut dsd = Vec::with_capacity(nrows);
                let mut dxd = Vec::with_capacity(nrows);
                for (j, row) in ws.diag_rows.iter().enumerate() {
                    let d_s = rd_diag[j] + row.terms.iter().map(|&(v, co)| co * dy[v]).sum::<f64>();
                    let mut d_x = sigma_mu / it.sd[j] - it.xd[j] - it.xd[j] * d_s / it.sd[j];
                    if let Some(aff) = corr {
                        d_x -= aff.dxd[j] * aff.dsd[j] / it.sd[j];
                    }
                    dsd.push(d_s);
                    dxd.push(d_x);
                }
                Direction { dy, ds, dx, dsd, dxd }
            };

            // predictor
            let rhs_aff = assemble_rhs(0.0, None);
            let dy_aff = match schur.solve(&rhs_aff) {
                Some(v) => v,
                None => {
                    return self.finish(best, SolverStatus::NumericalFailure,
                        "Schur solve failed", iter, p, &ws, &it);
                }
            };
            let aff = direction(dy_aff, 0.0, None);
            let (ap_aff, ad_aff) = step_lengths(&it, &aff);
            let mut gap_aff = 0.0;
            for k in 0..ws.blocks.len() {
                let mut xs = it.x[k].clone();
                xs.add_scaled(&aff.dx[k], ap_aff);
                let mut ss = it.s[k].clone();
                ss.add_scaled(&aff.ds[k], ad_aff);
                gap_aff += xs.dot(&ss);
            }
            for j in 0..nrows {
                gap_aff +=
                    (it.xd[j] + ap_aff * aff.dxd[j]) * (it.sd[j] + ad_aff * aff.dsd[j]);
            }
            let mu_aff = (gap_aff / total_dim as f64).max(0.0);
            let sigma = ((mu_aff / mu).powi(3)).clamp(1e-6, 0.9);

            // corrector
            let rhs = assemble_rhs(sigma * mu, Some(&aff));
            let dy = match schur.solve(&rhs) {
                Some(v) => v,
                None => {
                    return self.finish(best, SolverStatus::NumericalFailure,
                        "Schur solve failed", iter, p, &ws, &it);
                }
            };
            let dir = direction(dy, sigma * mu, Some(&aff));
            let (ap, ad) = step_lengths(&it, &dir);
            let gamma = 0.97;
            let (ap, ad) = ((gamma * ap).min(1.0), (gamma * ad).min(1.0));
            for k in 0..ws.blocks.len() {
                it.x[k].add_scaled(&dir.dx[k], ap);
                it.x[k].symmetrize();
                it.s[k].add_scaled(&dir.ds[k], ad);
                it.s[k].symmetrize();
            }
            for j in 0..nrows {
                it.xd[j] += ap * dir.dxd[j];
                it.sd[j] += ad * dir.dsd[j];
            }
            for (yv, d) in it.y.iter_mut().zip(&dir.dy) {
                *yv += ad * d;
            }
            if ap < 1e-10 && ad < 1e-10 {
                break;
            }
        }
        let iters = cfg.max_iter;
        match best {
            Some((score, mut sol)) => {
                sol.status = if score <= 50.0 * cfg.gap_tol.max(cfg.feas_tol) {
                    SolverStatus::NearOptimal
                } else {
                    SolverStatus::NumericalFailure
                };
                sol.message = format!("stopped with residual score {score:.2e}");
                sol
            }
            None => SolverSolution {
                status: SolverStatus::NumericalFailure,
                primal_value: f64::NAN,
                dual_value: f64::NAN,
                y: vec![0.0; n],
                psd_duals: Vec::new(),
                nonneg_duals: Vec::new(),
                iterations: iters,
                message: "no iterate produced".into(),
            },
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        best: Option<(f64, SolverSolution)>,
        status: SolverStatus,
        msg: &str,
        iter: usize,
        p: &ConicProgram,
        ws: &Workspace,
        it: &Iterate,
    ) -> SolverSolution {
        let _ = ws;
        let mut sol = match best {
            Some((_, sol)) => sol,
            None => self.snapshot(p, ws, it, f64::NAN, f64::NAN, iter, status),
        };
        sol.status = status;
        sol.message = msg.to_string();
        sol
    }

    #[allow(clippy::too_many_arguments)]
    fn snapshot(
        &self,
        p: &ConicProgram,
        ws: &Workspace,
        it: &Iterate,
        pobj: f64,
        dobj: f64,
        iter: usize,
        status: SolverStatus,
    ) -> SolverSolution {
        let _ = (p, ws);
        SolverSolution {
            status,
            primal_value: pobj,
            dual_value: dobj,
            y: it.y.clone(),
            psd_duals: it.x.iter().map(|x| x.a.clone()).collect(),
            nonneg_duals: it.xd.clone(),
            iterations: iter,
            message: String::new(),
        }
    }
}

fn step_lengths(it: &Iterate, dir: &Direction) -> (f64, f64) {
    let mut ap: f64 = 1.0;
    let mut ad: f64 = 1.0;
    for k in 0..it.x.len() {
        ap = ap.min(max_step(&it.x[k], &dir.dx[k]));
        ad = ad.min(max_step(&it.s[k], &dir.ds[k]));
    }
    ap = ap.min(max_step_scalar(&it.xd, &dir.dxd));
    ad = ad.min(max_step_scalar(&it.sd, &dir.dsd));
    (ap, ad)
}

fn mat_mul(a: &Sym, b: &Sym) -> Sym {
    let d = a.d;
    let mut out = Sym::zeros(d);
    let am = a.to_dmatrix();
    let bm = b.to_dmatrix();
    let prod = am * bm;
    out.a.copy_from_slice(prod.transpose().as_slice());
    out
}

/// Symmetrized HKM Schur complement, factored in block-arrow form: one dense
/// factor per block's local variables plus a small shared core.
struct SchurSystem {
    shared: Vec<usize>,
    locals: Vec<Vec<usize>>,
    ll: Vec<Option<nalgebra_lapack::Cholesky<f64, nalgebra::Dyn>>>,
    sl: Vec<DMatrix<f64>>, // per block: n_s x n_l
    core: Option<nalgebra_lapack::Cholesky<f64, nalgebra::Dyn>>,
    w: Vec<DMatrix<f64>>, // per block: n_l x n_s = ll^-1 * ls
    slot_of: Vec<(usize, usize, bool)>, // var -> (block-or-0, index, is_shared)
}

impl SchurSystem {
    fn build(ws: &Workspace, sinv: &[Sym], it: &Iterate) -> Option<SchurSystem> {
        let ns = ws.shared.len();
        let mut shared_pos = vec![usize::MAX; ws.n];
        for (i, &v) in ws.shared.iter().enumerate() {
            shared_pos[v] = i;
        }
        let mut core = DMatrix::<f64>::zeros(ns, ns);
        let mut ll_mats: Vec<DMatrix<f64>> = ws
            .locals
            .iter()
            .map(|l| DMatrix::zeros(l.len(), l.len()))
            .collect();
        let mut sl: Vec<DMatrix<f64>> = ws
            .locals
            .iter()
            .map(|l| DMatrix::zeros(ns, l.len()))
            .collect();
        let mut slot_of = vec![(0usize, 0usize, false); ws.n];
        for (i, &v) in ws.shared.iter().enumerate() {
            slot_of[v] = (0, i, true);
        }
        for (k, loc) in ws.locals.iter().enumerate() {
            for (i, &v) in loc.iter().enumerate() {
                slot_of[v] = (k, i, false);
            }
        }

        for (k, b) in ws.blocks.iter().enumerate() {
            let nv = b.vars.len();
            let d = b.dim;
            // rows of the per-block Schur piece, in parallel
            let rows: Vec<Vec<f64>> = (0..nv)
                .into_par_iter()
                .map(|vi| {
                    let (_, cells) = &b.vars[vi];
                    let mut t = vec![0.0; d * d];
                    for &(r, c, co) in cells {
                        let (r, c) = (r as usize, c as usize);
                        // T += co * Sinv[:,r] X[c,:] (+ mirrored)
                        for i in 0..d {
                            let sir = co * sinv[k].a[i * d + r];
                            if sir != 0.0 {
                                let xrow = &it.x[k].a[c * d..(c + 1) * d];
                                let trow = &mut t[i * d..(i + 1) * d];
                                for (tv, xv) in trow.iter_mut().zip(xrow) {
                                    *tv += sir * xv;
                                }
                            }
                        }
                        if r != c {
                            for i in 0..d {
                                let sic = co * sinv[k].a[i * d + c];
                                if sic != 0.0 {
                                    let xrow = &it.x[k].a[r * d..(r + 1) * d];
                                    let trow = &mut t[i * d..(i + 1) * d];
                                    for (tv, xv) in trow.iter_mut().zip(xrow) {
                                        *tv += sic * xv;
                                    }
                                }
                            }
                        }
                    }
                    let tm = Sym { d, a: t };
                    let mut row = vec![0.0; nv];
                    b.inner_all(&tm, &mut row);
                    row
                })
                .collect();
            // scatter symmetrized entries
            for (ui, (uvar, _)) in b.vars.iter().enumerate() {
                for (vi, (vvar, _)) in b.vars.iter().enumerate() {
                    let val = 0.5 * (rows[ui][vi] + rows[vi][ui]);
                    let (bu, iu, su) = slot_of[*uvar];
                    let (bv, iv, sv) = slot_of[*vvar];
                    match (su, sv) {
                        (true, true) => core[(iu, iv)] += val,
                        (true, false) => {
                            debug_assert_eq!(bv, k);
                            sl[k][(iu, iv)] += val;
                        }
                        // covered when the pair is visited in the other order
                        (false, true) => debug_assert_eq!(bu, k),
                        (false, false) => {
                            debug_assert_eq!(bu, k);
                            debug_assert_eq!(bv, k);
                            ll_mats[k][(iu, iv)] += val;
                        }
                    }
                }
            }
        }
        for (j, row) in ws.diag_rows.iter().enumerate() {
            let w = it.xd[j] / it.sd[j];
            for &(u, cu) in &row.terms {
                for &(v, cv) in &row.terms {
                    let val = cu * cv * w;
                    let (bu, iu, su) = slot_of[u];
                    let (bv, iv, sv) = slot_of[v];
                    match (su, sv) {
                        (true, true) => core[(iu, iv)] += val,
                        (true, false) => sl[bv][(iu, iv)] += val,
                        (false, true) => {} // other visiting order covers it
                        (false, false) => {
                            if bu == bv {
                                ll_mats[bu][(iu, iv)] += val;
                            }
                        }
                    }
                }
            }
        }

        let reg = 1e-12;
        let mut ll = Vec::with_capacity(ll_mats.len());
        let mut w = Vec::with_capacity(ll_mats.len());
        for (k, mut m) in ll_mats.into_iter().enumerate() {
            if m.nrows() == 0 {
                ll.push(None);
                w.push(DMatrix::zeros(0, ns));
                continue;
            }
            for i in 0..m.nrows() {
                m[(i, i)] += reg * (1.0 + m[(i, i)].abs());
            }
            let chol = factor_with_retries(m)?;
            let wk = if ns == 0 {
                DMatrix::zeros(sl[k].ncols(), 0)
            } else {
                let t = chol.solve(&sl[k].transpose())?;
                core -= &sl[k] * &t;
                t
            };
            ll.push(Some(chol));
            w.push(wk);
        }
        let core = if ns == 0 {
            None
        } else {
            for i in 0..ns {
                core[(i, i)] += reg * (1.0 + core[(i, i)].abs());
            }
            Some(factor_with_retries(core)?)
        };
        Some(SchurSystem {
            shared: ws.shared.clone(),
            locals: ws.locals.clone(),
            ll,
            sl,
            core,
            w,
            slot_of,
        })
    }

    fn solve(&self, rhs: &[f64]) -> Option<Vec<f64>> {
        let ns = self.shared.len();
        let mut rs = DMatrix::<f64>::zeros(ns, 1);
        for (i, &v) in self.shared.iter().enumerate() {
            rs[(i, 0)] = rhs[v];
        }
        let mut rl: Vec<DMatrix<f64>> = Vec::with_capacity(self.locals.len());
        for loc in &self.locals {
            let mut r = DMatrix::<f64>::zeros(loc.len(), 1);
            for (i, &v) in loc.iter().enumerate() {
                r[(i, 0)] = rhs[v];
            }
            rl.push(r);
        }
        // rs' = rs - sum_k sl_k ll_k^-1 rl_k
        for (k, chol) in self.ll.iter().enumerate() {
            if let Some(chol) = chol {
                let t = chol.solve(&rl[k])?;
                rs -= &self.sl[k] * t;
            }
        }
        let ys = match &self.core {
            Some(core) => core.solve(&rs)?,
            None => rs,
        };
        let mut out = vec![0.0; self.slot_of.len()];
        for (i, &v) in self.shared.iter().enumerate() {
            out[v] = ys[(i, 0)];
        }
        for (k, loc) in self.locals.iter().enumerate() {
            if loc.is_empty() {
                continue;
            }
            let chol = self.ll[k].as_ref()?;
            let t = chol.solve(&rl[k])?;
            let corr = &self.w[k] * &ys;
            for (i, &v) in loc.iter().enumerate() {
                out[v] = t[(i, 0)] - corr[(i, 0)];
            }
        }
        Some(out)
    }
}

fn factor_with_retries(
    mut m: DMatrix<f64>,
) -> Option<nalgebra_lapack::Cholesky<f64, nalgebra::Dyn>> {
    let mut reg = 0.0;
    for _ in 0..6 {
        let mut t = m.clone();
        if reg > 0.0 {
            for i in 0..t.nrows() {
                t[(i, i)] += reg * (1.0 + t[(i, i)].abs());
            }
        }
        if let Some(c) = nalgebra_lapack::Cholesky::new(t) {
            return Some(c);
        }
        reg = if reg == 0.0 { 1e-11 } else { reg * 100.0 };
        if reg > 1e-4 {
            break;
        }
        m = m.clone();
    }
    None
}

impl ConicSolver for HkmSolver {
    fn name(&self) -> &'static str {
        "hkm"
    }

    fn supports(&self, program: &ConicProgram) -> bool {
        program.soc_blocks.is_empty() && program.equalities.is_empty()
    }

    fn solve(
        &self,
        program: &ConicProgram,
        cfg: &SolverConfig,
    ) -> Result<SolverSolution, SolverError> {
        if !self.supports(program) {
            return Err(SolverError::Unsupported {
                backend: "hkm",
                feature: "second-order cones / equality rows",
            });
        }
        Ok(self.run(program, cfg))
    }
}
