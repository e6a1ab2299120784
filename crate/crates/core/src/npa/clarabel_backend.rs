//! General-purpose conic backend. Handles every cone of the program contract
//! (equalities, nonnegatives, second-order and PSD-triangle cones); used for
//! the projection program's norm epigraph and as a cross-check against the
//! specialized interior-point backend.

use super::solver::{
    AffineRow, ConicProgram, ConicSolver, SolverConfig, SolverError, SolverSolution, SolverStatus,
};
use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus as ClStatus, SupportedConeT,
};

pub struct ClarabelSolver;

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn svec_index(r: usize, c: usize) -> usize {
    debug_assert!(r <= c);
    c * (c + 1) / 2 + r
}

struct TripletMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    fn new(cols: usize) -> Self {
        TripletMatrix { rows: 0, cols, entries: Vec::new() }
    }

    fn push_row(&mut self, terms: &[(usize, f64)]) -> usize {
        let r = self.rows;
        for &(c, v) in terms {
            if v != 0.0 {
                self.entries.push((r, c, v));
            }
        }
        self.rows += 1;
        r
    }

    fn add(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((r, c, v));
        }
    }

    fn bump_rows(&mut self, n: usize) {
        self.rows += n;
    }

    fn to_csc(&self) -> CscMatrix<f64> {
        let mut per_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.cols];
        for &(r, c, v) in &self.entries {
            per_col[c].push((r, v));
        }
        let mut colptr = Vec::with_capacity(self.cols + 1);
        let mut rowval = Vec::with_capacity(self.entries.len());
        let mut nzval = Vec::with_capacity(self.entries.len());
        colptr.push(0);
        for col in per_col.iter_mut() {
            col.sort_unstable_by_key(|&(r, _)| r);
            // merge duplicates
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(col.len());
            for &(r, v) in col.iter() {
                if let Some(last) = merged.last_mut() {
                    if last.0 == r {
                        last.1 += v;
                        continue;
                    }
                }
                merged.push((r, v));
            }
            for (r, v) in merged {
                rowval.push(r);
                nzval.push(v);
            }
            colptr.push(rowval.len());
        }
        CscMatrix::new(self.rows, self.cols, colptr, rowval, nzval)
    }
}

impl ConicSolver for ClarabelSolver {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn supports(&self, _program: &ConicProgram) -> bool {
        true
    }

    fn solve(
        &self,
        program: &ConicProgram,
        cfg: &SolverConfig,
    ) -> Result<SolverSolution, SolverError> {
        let n = program.n_vars;
        let mut q = vec![0.0; n];
        for &(v, c) in &program.objective {
            q[v] += c;
        }
        let mut a = TripletMatrix::new(n);
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

        let push_affine = |a: &mut TripletMatrix, b: &mut Vec<f64>, row: &AffineRow| {
            let neg: Vec<(usize, f64)> = row.terms.iter().map(|&(v, c)| (v, -c)).collect();
            a.push_row(&neg);
            b.push(row.constant);
        };

        if !program.equalities.is_empty() {
            for row in &program.equalities {
                push_affine(&mut a, &mut b, row);
            }
            cones.push(SupportedConeT::ZeroConeT(program.equalities.len()));
        }
        if !program.nonneg.is_empty() {
            for row in &program.nonneg {
                push_affine(&mut a, &mut b, row);
            }
            cones.push(SupportedConeT::NonnegativeConeT(program.nonneg.len()));
        }
        for soc in &program.soc_blocks {
            for row in soc {
                push_affine(&mut a, &mut b, row);
            }
            cones.push(SupportedConeT::SecondOrderConeT(soc.len()));
        }
        let mut psd_row_start = Vec::new();
        for blk in &program.psd_blocks {
            let d = blk.dim;
            let tri = d * (d + 1) / 2;
            let base = a.rows;
            psd_row_start.push(base);
            let mut consts = vec![0.0; tri];
            for &(r, c, v) in &blk.const_tri {
                let scale = if r == c { 1.0 } else { SQRT2 };
                consts[svec_index(r, c)] += scale * v;
            }
            for &(var, r, c, co) in &blk.var_tri {
                let scale = if r == c { 1.0 } else { SQRT2 };
                a.add(base + svec_index(r, c), var, -scale * co);
            }
            a.bump_rows(tri);
            b.extend_from_slice(&consts);
            cones.push(SupportedConeT::PSDTriangleConeT(d));
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(cfg.verbose)
            .max_iter(cfg.max_iter as u32)
            .tol_gap_rel(cfg.gap_tol)
            .tol_gap_abs(cfg.gap_tol)
            .tol_feas(cfg.feas_tol)
            .build()
            .map_err(|e| SolverError::Setup(format!("{e:?}")))?;
        let p = CscMatrix::<f64>::zeros((n, n));
        let a_csc = a.to_csc();
        let mut solver = DefaultSolver::new(&p, &q, &a_csc, &b, &cones, settings)
            .map_err(|e| SolverError::Setup(format!("{e:?}")))?;
        solver.solve();
        let sol = &solver.solution;
        let status = match sol.status {
            ClStatus::Solved => SolverStatus::Optimal,
            ClStatus::AlmostSolved => SolverStatus::NearOptimal,
            ClStatus::PrimalInfeasible | ClStatus::AlmostPrimalInfeasible => {
                SolverStatus::Infeasible
            }
            _ => SolverStatus::NumericalFailure,
        };
        // recover dual blocks from the PSD cone duals
        let mut psd_duals = Vec::with_capacity(program.psd_blocks.len());
        for (blk, &start) in program.psd_blocks.iter().zip(&psd_row_start) {
            let d = blk.dim;
            let mut x = vec![0.0; d * d];
            for c in 0..d {
                for r in 0..=c {
                    let z = sol.z[start + svec_index(r, c)];
                    let v = if r == c { z } else { z / SQRT2 };
                    x[r * d + c] = v;
                    x[c * d + r] = v;
                }
            }
            psd_duals.push(x);
        }
        let nonneg_duals = if program.nonneg.is_empty() {
            Vec::new()
        } else {
            let start = program.equalities.len();
            sol.z[start..start + program.nonneg.len()].to_vec()
        };
        let dual_value = -b.iter().zip(&sol.z).map(|(b, z)| b * z).sum::<f64>() + program.offset;
        Ok(SolverSolution {
            status,
            primal_value: sol.obj_val + program.offset,
            dual_value,
            y: sol.x.clone(),
            psd_duals,
            nonneg_duals,
            iterations: sol.iterations as usize,
            message: format!("clarabel status {:?}", sol.status),
        })
    }
}
