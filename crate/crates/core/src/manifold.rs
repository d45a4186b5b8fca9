//! Geometry of the critical manifold `i_ion(v, n, p) = i` in the `(v, p)`
//! chart: fold lines, branch labels, fast-fiber jumps and folded
//! singularities.

use alloc::vec::Vec;

use crate::linalg::Complex;
use crate::model::{fast_current, FullState, ModelParams, CHART_DELTA};
use crate::reduced::desing_jacobian;
use crate::roots::{bisect, find_roots, sign_changes};
use crate::{Error, Result};

/// Voltage window for equilibria, jumps and scans. It extends past `v = -1`
/// because the rest state can sit slightly below it.
pub const V_MIN: f64 = -2.0;
pub const V_MAX: f64 = 2.0;

/// `|d i_ion / dv|` below which a point counts as a fold point.
pub const FOLD_TOL: f64 = 1e-10;
/// `|c''|` below which a fold point is a cusp.
pub const CUSP_TOL: f64 = 1e-10;

const JUMP_SUBINTERVALS: usize = 400;
const FOLDED_SCAN: usize = 2000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Lower attracting sheet.
    Sl,
    /// Repelling middle sheet.
    M,
    /// Upper attracting sheet.
    Sh,
    /// Lower fold, between `S_l` and `M`.
    Fl,
    /// Upper fold, between `M` and `S_h`.
    Fh,
}

impl Branch {
    pub fn is_fold(self) -> bool {
        matches!(self, Branch::Fl | Branch::Fh)
    }

    pub fn is_stable(self) -> bool {
        matches!(self, Branch::Sl | Branch::Sh)
    }

    pub fn label(self) -> &'static str {
        match self {
            Branch::Sl => "S_l",
            Branch::M => "M",
            Branch::Sh => "S_h",
            Branch::Fl => "F_l",
            Branch::Fh => "F_h",
        }
    }
}

/// A point of the critical manifold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    pub v: f64,
    pub n: f64,
    pub p: f64,
    pub branch: Branch,
}

impl ChartPoint {
    pub fn state(&self) -> FullState {
        FullState::new(self.v, self.n, self.p)
    }
}

/// `n` on the critical manifold above `(v, p)`.
pub fn chart_n(v: f64, p: f64, params: &ModelParams) -> Result<f64> {
    if (v + 1.0).abs() <= CHART_DELTA {
        return Err(Error::ChartSingular { v });
    }
    Ok(chart_n_unchecked(v, p, params))
}

#[inline]
pub(crate) fn chart_n_unchecked(v: f64, p: f64, params: &ModelParams) -> f64 {
    (params.i - fast_current(v, params).value - p * (v - 1.0)) / (v + 1.0)
}

/// Closed-form solution of the fold system `{n + p = -c'; n(v+1) + p(v-1) = i - c}`.
pub fn fold_np(v: f64, params: &ModelParams) -> (f64, f64) {
    let c = fast_current(v, params);
    let n = 0.5 * (params.i - c.value + (v - 1.0) * c.slope);
    (n, -c.slope - n)
}

/// Residual of the folded-singularity condition along the fold, the
/// desingularized `v`-velocity up to sign.
pub fn folded_residual(v: f64, params: &ModelParams) -> f64 {
    let (n, p) = fold_np(v, params);
    (v + 1.0) * (params.s_n(v) - n) + (v - 1.0) * (params.s_p(v) - p) / params.tau
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldCurve {
    pub label: Branch,
    pub i: f64,
    pub samples: Vec<FullState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FoldedType {
    Focus,
    Node,
    Saddle,
    SaddleNode,
}

impl FoldedType {
    pub fn from_eigenvalues(eig: &[Complex; 2]) -> Self {
        if !eig[0].is_real() {
            FoldedType::Focus
        } else if eig[0].re.abs() < 1e-8 || eig[1].re.abs() < 1e-8 {
            FoldedType::SaddleNode
        } else if (eig[0].re > 0.0) == (eig[1].re > 0.0) {
            FoldedType::Node
        } else {
            FoldedType::Saddle
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FoldedType::Focus => "folded_focus",
            FoldedType::Node => "folded_node",
            FoldedType::Saddle => "folded_saddle",
            FoldedType::SaddleNode => "folded_saddle_node",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FoldedSingularity {
    pub state: FullState,
    pub i: f64,
    pub fold: Branch,
    pub kind: FoldedType,
    pub eigenvalues: [Complex; 2],
    /// Whether `p` lies in `[0, g_p]`.
    pub physical: bool,
}

/// The critical manifold at fixed parameters and applied current.
#[derive(Clone, Copy, Debug)]
pub struct CriticalManifold {
    params: ModelParams,
    v_inflection: f64,
}

impl CriticalManifold {
    /// Fails with `NotSShaped` unless `c''` changes sign exactly once, from
    /// negative to positive, on `(-1, 1)`.
    pub fn new(params: ModelParams) -> Result<Self> {
        params.validate()?;
        let curv = |v: f64| fast_current(v, &params).curvature;
        let lo = -1.0 + CHART_DELTA;
        let hi = 1.0 - CHART_DELTA;
        let brackets = sign_changes(curv, lo, hi, FOLDED_SCAN);
        match brackets.as_slice() {
            [(a, b, fa, _)] if *fa < 0.0 => {
                let v_inflection = bisect(curv, *a, *b, 0.0).ok_or(Error::NotSShaped)?;
                Ok(Self {
                    params,
                    v_inflection,
                })
            }
            _ => Err(Error::NotSShaped),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Root of `c''`, separating `F_l` from `F_h`.
    pub fn v_inflection(&self) -> f64 {
        self.v_inflection
    }

    pub fn with_current(&self, i: f64) -> Self {
        Self {
            params: self.params.with_current(i),
            ..*self
        }
    }

    pub fn chart_n(&self, v: f64, p: f64) -> Result<f64> {
        chart_n(v, p, &self.params)
    }

    /// `d i_ion / dv` at a point of the manifold.
    pub fn dv_ionic(&self, v: f64, n: f64, p: f64) -> f64 {
        fast_current(v, &self.params).slope + n + p
    }

    fn label(&self, v: f64, dv: f64) -> Branch {
        let below = v < self.v_inflection;
        if dv.abs() < FOLD_TOL {
            if below {
                Branch::Fl
            } else {
                Branch::Fh
            }
        } else if dv < 0.0 {
            Branch::M
        } else if below {
            Branch::Sl
        } else {
            Branch::Sh
        }
    }

    /// Branch of the manifold point `(v, n, p)`; `n` is trusted, not recomputed.
    pub fn classify_state(&self, s: &FullState) -> Branch {
        self.label(s.v, self.dv_ionic(s.v, s.n, s.p))
    }

    pub fn point(&self, v: f64, p: f64) -> Result<ChartPoint> {
        let n = self.chart_n(v, p)?;
        let branch = self.label(v, self.dv_ionic(v, n, p));
        Ok(ChartPoint { v, n, p, branch })
    }

    pub fn classify_branch(&self, v: f64, p: f64) -> Result<Branch> {
        Ok(self.point(v, p)?.branch)
    }

    /// The fold point at voltage `v`.
    pub fn fold_point(&self, v: f64) -> Result<ChartPoint> {
        let curv = fast_current(v, &self.params).curvature;
        if curv.abs() < CUSP_TOL {
            return Err(Error::DegenerateFold { v });
        }
        let (n, p) = fold_np(v, &self.params);
        let branch = if curv < 0.0 { Branch::Fl } else { Branch::Fh };
        Ok(ChartPoint { v, n, p, branch })
    }

    /// Voltage range of a fold line inside the chart window.
    pub fn fold_range(&self, fold: Branch) -> (f64, f64) {
        match fold {
            Branch::Fl => (-1.0 + CHART_DELTA, self.v_inflection),
            _ => (self.v_inflection, 1.0 - CHART_DELTA),
        }
    }

    /// Both fold lines sampled at `samples` cell midpoints each. With
    /// `physical` set, only samples with `p` in `[0, g_p]` are kept.
    pub fn fold_locus(&self, samples: usize, physical: bool) -> Result<(FoldCurve, FoldCurve)> {
        let g_p = self.params.gate_p.g;
        let curve = |label: Branch| -> Result<FoldCurve> {
            let (lo, hi) = self.fold_range(label);
            let h = (hi - lo) / samples as f64;
            let mut out = Vec::with_capacity(samples);
            for k in 0..samples {
                let cp = self.fold_point(lo + (k as f64 + 0.5) * h)?;
                if !physical || (0.0..=g_p).contains(&cp.p) {
                    out.push(cp.state());
                }
            }
            Ok(FoldCurve {
                label,
                i: self.params.i,
                samples: out,
            })
        };
        Ok((curve(Branch::Fl)?, curve(Branch::Fh)?))
    }

    /// The fold point on `fold` with the given `p`. `p_F` is monotone along
    /// each fold inside the chart window, so this is a plain bisection.
    pub fn fold_at_p(&self, fold: Branch, p: f64) -> Result<ChartPoint> {
        let (lo, hi) = self.fold_range(fold);
        let pf = |v: f64| fold_np(v, &self.params).1 - p;
        let (plo, phi) = (pf(lo) + p, pf(hi) + p);
        let v = bisect(pf, lo, hi, 0.0).ok_or(Error::OutOfInterval {
            p,
            lo: plo.min(phi),
            hi: plo.max(phi),
        })?;
        self.fold_point(v)
    }

    /// Fast-fiber projection: keep `(n, p)` and move `v` to the attracting
    /// layer equilibrium on the other side of the middle branch. Fold and
    /// `S_l` points jump up, `F_h` and `S_h` points jump down.
    pub fn fast_jump(&self, from: &ChartPoint) -> Result<ChartPoint> {
        let (n, p) = (from.n, from.p);
        let up = match from.branch {
            Branch::Fl | Branch::Sl => true,
            Branch::Fh | Branch::Sh => false,
            Branch::M => {
                return Err(Error::NotOnStableBranch {
                    dv: self.dv_ionic(from.v, n, p),
                });
            }
        };
        let g = |v: f64| self.params.i - self.params.ionic_current(&FullState::new(v, n, p));
        // a fold is a double root, so step off it before scanning
        let gap = 1e-6;
        let (lo, hi) = if up {
            (from.v + gap, V_MAX)
        } else {
            (V_MIN, from.v - gap)
        };
        if lo >= hi {
            return Err(Error::NoLanding { v: from.v });
        }
        let attracting: Vec<_> = sign_changes(g, lo, hi, JUMP_SUBINTERVALS)
            .into_iter()
            .filter(|&(_, _, fa, _)| fa > 0.0)
            .collect();
        let bracket = if up {
            attracting.first()
        } else {
            attracting.last()
        };
        let &(a, b, _, _) = bracket.ok_or(Error::NoLanding { v: from.v })?;
        let v = bisect(g, a, b, 0.0).ok_or(Error::NoLanding { v: from.v })?;
        let s = FullState::new(v, n, p);
        Ok(ChartPoint {
            v,
            n,
            p,
            branch: self.classify_state(&s),
        })
    }

    /// Point of `P_l`, the projection of `F_h` onto `S_l`, at ordinate `p`.
    pub fn p_l_point(&self, p: f64) -> Result<ChartPoint> {
        self.fast_jump(&self.fold_at_p(Branch::Fh, p)?)
    }

    /// Point of `P_h`, the projection of `F_l` onto `S_h`, at ordinate `p`.
    pub fn p_h_point(&self, p: f64) -> Result<ChartPoint> {
        self.fast_jump(&self.fold_at_p(Branch::Fl, p)?)
    }

    /// Zeros of the desingularized field on both folds, classified by the
    /// eigenvalues of its linearization.
    pub fn folded_singularities(&self) -> Result<Vec<FoldedSingularity>> {
        let mut out = Vec::new();
        for fold in [Branch::Fl, Branch::Fh] {
            let (lo, hi) = self.fold_range(fold);
            let roots = find_roots(
                |v| folded_residual(v, &self.params),
                lo,
                hi,
                FOLDED_SCAN,
                0.0,
            );
            for v in roots {
                let cp = self.fold_point(v)?;
                let lin = desing_jacobian(cp.v, cp.p, &self.params)?;
                out.push(FoldedSingularity {
                    state: cp.state(),
                    i: self.params.i,
                    fold,
                    kind: FoldedType::from_eigenvalues(&lin.eigenvalues),
                    eigenvalues: lin.eigenvalues,
                    physical: (0.0..=self.params.gate_p.g).contains(&cp.p),
                });
            }
        }
        Ok(out)
    }

    /// Physical folded singularities only.
    pub fn physical_folded_singularities(&self) -> Result<Vec<FoldedSingularity>> {
        Ok(self
            .folded_singularities()?
            .into_iter()
            .filter(|f| f.physical)
            .collect())
    }
}
