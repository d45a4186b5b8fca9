//! Slow dynamics on the critical manifold: reduced and desingularized
//! fields, equilibria, invariant manifolds of the middle saddle, the
//! singular return map and the rest-spike classifier.
//!
//! Slow trajectories are integrated with the desingularized field lifted to
//! `(v, n, p)`. The lift keeps `i_ion = i` invariant and stays regular across
//! `v = -1`, where the `(v, p)` chart degenerates.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{eig2, eigvec2, Complex, Mat2};
use crate::manifold::{
    chart_n, Branch, ChartPoint, CriticalManifold, FoldedSingularity, V_MAX, V_MIN,
};
use crate::model::{activation_slope, fast_current, FullState, ModelParams};
use crate::ode::{Control, Direction, EventSpec, IntegrationSettings, Integrator, Termination};
use crate::roots::{bisect, find_roots};
use crate::{Error, Result};

/// Denominator threshold of the reduced field.
pub const NEAR_FOLD: f64 = 1e-8;
/// Field norm below which a slow trajectory is taken to rest at an equilibrium.
pub const REST_SPEED: f64 = 1e-9;
pub const REST_STEPS: usize = 10;
/// Arrival distance to a folded singularity that voids the jump.
pub const FOLDED_GUARD: f64 = 1e-6;
/// Offset along the saddle eigenvectors for manifold shooting.
pub const SHOOT_OFFSET: f64 = 1e-4;
pub const MANIFOLD_ARC_LENGTH: f64 = 50.0;
/// Slack on the `p` window `[0, g_p]` for manifold branches.
pub const P_MARGIN: f64 = 0.2;

const EQUILIBRIUM_SCAN: usize = 2000;
const SLOW_HORIZON: f64 = 5000.0;
const MANIFOLD_HORIZON: f64 = 500.0;
/// Slack when checking that return-map images stay in their intervals.
const INTERVAL_SLACK: f64 = 1e-9;

/// Steady-state current `i_s(v)` and its derivative.
pub fn iv_curve(v: f64, params: &ModelParams) -> (f64, f64) {
    let c = fast_current(v, params);
    let sn = params.s_n(v);
    let sp = params.s_p(v);
    let i = c.value + sn * (v + 1.0) + sp * (v - 1.0);
    let di = c.slope
        + sn
        + sp
        + activation_slope(v, &params.gate_n) * (v + 1.0)
        + activation_slope(v, &params.gate_p) * (v - 1.0);
    (i, di)
}

/// Voltages of the two folds of the i-v curve in `(-1, 1)`, lower first, or
/// `None` when the curve is not S-shaped there.
pub fn iv_folds(params: &ModelParams) -> Option<(f64, f64)> {
    let roots = find_roots(
        |v| iv_curve(v, params).1,
        -1.0 + 1e-9,
        1.0 - 1e-9,
        EQUILIBRIUM_SCAN,
        0.0,
    );
    match roots.as_slice() {
        [a, b] => Some((*a, *b)),
        _ => None,
    }
}

#[inline]
fn desing_chart(v: f64, p: f64, n: f64, params: &ModelParams) -> ([f64; 2], f64) {
    let dv = fast_current(v, params).slope + n + p;
    let rn = params.s_n(v) - n;
    let rp = (params.s_p(v) - p) / params.tau;
    ([-(v + 1.0) * rn - (v - 1.0) * rp, dv * rp], dv)
}

/// Reduced field in the `(v, p)` chart.
pub fn reduced_vf(v: f64, p: f64, params: &ModelParams) -> Result<[f64; 2]> {
    let n = chart_n(v, p, params)?;
    let (f, dv) = desing_chart(v, p, n, params);
    if dv.abs() <= NEAR_FOLD {
        return Err(Error::NearFold { v, p });
    }
    Ok([f[0] / dv, (params.s_p(v) - p) / params.tau])
}

/// Desingularized field: the reduced field times `d i_ion / dv`.
pub fn desing_vf(v: f64, p: f64, params: &ModelParams) -> Result<[f64; 2]> {
    let n = chart_n(v, p, params)?;
    Ok(desing_chart(v, p, n, params).0)
}

/// Desingularized field lifted to `(v, n, p)`.
#[inline]
pub fn lifted_desing_field(x: &[f64; 3], params: &ModelParams) -> [f64; 3] {
    let [v, n, p] = *x;
    let dv = fast_current(v, params).slope + n + p;
    let rn = params.s_n(v) - n;
    let rp = (params.s_p(v) - p) / params.tau;
    [-(v + 1.0) * rn - (v - 1.0) * rp, dv * rn, dv * rp]
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linearization {
    pub jacobian: Mat2,
    pub eigenvalues: [Complex; 2],
}

/// Analytic Jacobian of [`desing_vf`] in `(v, p)`.
pub fn desing_jacobian(v: f64, p: f64, params: &ModelParams) -> Result<Linearization> {
    let n = chart_n(v, p, params)?;
    let c = fast_current(v, params);
    let tau = params.tau;
    let d = c.slope + n + p;
    let rn = params.s_n(v) - n;
    let rp = params.s_p(v) - p;
    let dsn = activation_slope(v, &params.gate_n);
    let dsp = activation_slope(v, &params.gate_p);
    let dd_dv = c.curvature - d / (v + 1.0);
    let dd_dp = 2.0 / (v + 1.0);
    let jacobian = [
        [
            -rn - (v + 1.0) * dsn - d - rp / tau - (v - 1.0) * dsp / tau,
            (v - 1.0) * (1.0 / tau - 1.0),
        ],
        [(dd_dv * rp + d * dsp) / tau, (dd_dp * rp - d) / tau],
    ];
    Ok(Linearization {
        jacobian,
        eigenvalues: eig2(&jacobian),
    })
}

/// Jacobian of the reduced field in `(n, p)` coordinates, where `v` is the
/// implicit function of `(n, p)` on the manifold. Regular off the folds, so
/// it also covers points with `v` at or below `-1`.
pub fn reduced_jacobian_np(s: &FullState, params: &ModelParams) -> Result<Linearization> {
    let d = params.ionic_current_dv(s);
    if d.abs() <= NEAR_FOLD {
        return Err(Error::NearFold { v: s.v, p: s.p });
    }
    let dv_dn = -(s.v + 1.0) / d;
    let dv_dp = -(s.v - 1.0) / d;
    let dsn = activation_slope(s.v, &params.gate_n);
    let dsp = activation_slope(s.v, &params.gate_p) / params.tau;
    let jacobian = [
        [dsn * dv_dn - 1.0, dsn * dv_dp],
        [dsp * dv_dn, dsp * dv_dp - 1.0 / params.tau],
    ];
    Ok(Linearization {
        jacobian,
        eigenvalues: eig2(&jacobian),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    /// Below the lower fold of the i-v curve.
    Xl,
    Xm,
    Xh,
}

impl Family {
    pub fn label(self) -> &'static str {
        match self {
            Family::Xl => "x_l",
            Family::Xm => "x_m",
            Family::Xh => "x_h",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ReducedClass {
    StableNode,
    Saddle,
    UnstableNode,
    Focus,
}

impl ReducedClass {
    pub fn from_eigenvalues(eig: &[Complex; 2]) -> Self {
        if !eig[0].is_real() {
            ReducedClass::Focus
        } else if eig[0].re < 0.0 && eig[1].re < 0.0 {
            ReducedClass::StableNode
        } else if eig[0].re > 0.0 && eig[1].re > 0.0 {
            ReducedClass::UnstableNode
        } else {
            ReducedClass::Saddle
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ReducedClass::StableNode => "stable_node",
            ReducedClass::Saddle => "saddle",
            ReducedClass::UnstableNode => "unstable_node",
            ReducedClass::Focus => "focus",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReducedEquilibrium {
    pub v: f64,
    pub n: f64,
    pub p: f64,
    pub i: f64,
    pub family: Family,
    pub branch: Branch,
    pub class: ReducedClass,
    /// Eigenvalues of the reduced flow, i.e. of the desingularized flow with
    /// the time reversal on `M` undone.
    pub eigenvalues: [Complex; 2],
}

impl ReducedEquilibrium {
    pub fn state(&self) -> FullState {
        FullState::new(self.v, self.n, self.p)
    }

    pub fn chart_point(&self) -> ChartPoint {
        ChartPoint {
            v: self.v,
            n: self.n,
            p: self.p,
            branch: self.branch,
        }
    }
}

/// All equilibria of the reduced flow, i.e. roots of `i_s(v) = i` on the
/// voltage window, in increasing `v`.
pub fn equilibria(manifold: &CriticalManifold) -> Vec<ReducedEquilibrium> {
    let params = manifold.params();
    let i = params.i;
    let folds = iv_folds(params);
    // i_s is monotone between its critical points, so each piece holds at
    // most one root and tangential pairs cannot hide inside a scan cell
    let mut knots = vec![V_MIN];
    knots.extend(find_roots(
        |v| iv_curve(v, params).1,
        V_MIN,
        V_MAX,
        EQUILIBRIUM_SCAN,
        0.0,
    ));
    knots.push(V_MAX);
    let mut roots: Vec<f64> = Vec::new();
    for w in knots.windows(2) {
        if let Some(v) = bisect(|v| iv_curve(v, params).0 - i, w[0], w[1], 0.0) {
            if roots.last().is_none_or(|&r| v - r > 1e-12) {
                roots.push(v);
            }
        }
    }
    roots
        .into_iter()
        .map(|v| {
            let s = FullState::new(v, params.s_n(v), params.s_p(v));
            let family = match folds {
                Some((lo, _)) if v < lo => Family::Xl,
                Some((_, hi)) if v <= hi => Family::Xm,
                Some(_) => Family::Xh,
                None => Family::Xl,
            };
            let eigenvalues = reduced_jacobian_np(&s, params)
                .map(|l| l.eigenvalues)
                .unwrap_or([Complex::real(0.0); 2]);
            ReducedEquilibrium {
                v,
                n: s.n,
                p: s.p,
                i: iv_curve(v, params).0,
                family,
                branch: manifold.classify_state(&s),
                class: ReducedClass::from_eigenvalues(&eigenvalues),
                eigenvalues,
            }
        })
        .collect()
}

/// One leg of a singular orbit.
#[derive(Clone, Debug, PartialEq)]
pub enum Leg {
    Slow {
        branch: Branch,
        path: Vec<FullState>,
    },
    /// Along a fast fiber; `n` and `p` are shared by both ends.
    Fast { from: ChartPoint, to: ChartPoint },
}

impl Leg {
    pub fn first(&self) -> FullState {
        match self {
            Leg::Slow { path, .. } => path[0],
            Leg::Fast { from, .. } => from.state(),
        }
    }

    pub fn last(&self) -> FullState {
        match self {
            Leg::Slow { path, .. } => path[path.len() - 1],
            Leg::Fast { to, .. } => to.state(),
        }
    }
}

/// Alternating slow arcs and fast jumps.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SingularOrbit {
    pub legs: Vec<Leg>,
}

impl SingularOrbit {
    pub fn points(&self) -> impl Iterator<Item = FullState> + '_ {
        self.legs.iter().flat_map(|leg| match leg {
            Leg::Slow { path, .. } => path.clone(),
            Leg::Fast { from, to } => vec![from.state(), to.state()],
        })
    }

    pub fn max_p(&self) -> f64 {
        self.points().map(|s| s.p).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest distance between the end of one leg and the start of the next.
    pub fn continuity_gap(&self) -> f64 {
        self.legs
            .windows(2)
            .map(|w| w[0].last().distance(&w[1].first()))
            .fold(0.0, f64::max)
    }

    fn extend(&mut self, other: SingularOrbit) {
        self.legs.extend(other.legs);
    }
}

/// Result of a slow transit to a fold.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowTransit {
    pub arrival: ChartPoint,
    pub time: f64,
    pub path: Vec<FullState>,
}

impl SlowTransit {
    fn leg(&self, branch: Branch) -> Leg {
        Leg::Slow {
            branch,
            path: self.path.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BranchEnd {
    Fold,
    PWindow,
    Domain,
    ArcLength,
    Equilibrium,
    Horizon,
}

/// One branch of an invariant manifold of the saddle, as a polyline in
/// `(v, n, p)`. Stable branches end at the saddle, unstable ones start there.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldBranch {
    pub path: Vec<FullState>,
    pub end: BranchEnd,
    /// Snapped fold point when `end` is `Fold`.
    pub fold: Option<ChartPoint>,
    /// Crossings of `P_l`, in order of distance along the branch from the saddle.
    pub p_l_crossings: Vec<ChartPoint>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaddleManifolds {
    pub saddle: ReducedEquilibrium,
    pub stable: [ManifoldBranch; 2],
    pub unstable: [ManifoldBranch; 2],
    /// Unstable manifold meets `F_l`.
    pub x1: ChartPoint,
    /// Stable manifold meets `P_l`.
    pub x_minus1: Option<ChartPoint>,
}

/// Landmarks `x_1 .. x_4` and `x_-1` of the singular phase portrait.
#[derive(Clone, Debug, PartialEq)]
pub struct Landmarks {
    pub x_m: ReducedEquilibrium,
    pub x1: ChartPoint,
    pub x2: ChartPoint,
    pub x3: ChartPoint,
    pub x4: ChartPoint,
    pub x_minus1: ChartPoint,
    /// `x_1 -> x_2 -> x_3 -> x_4`.
    pub orbit: SingularOrbit,
}

impl Landmarks {
    /// `p(x_4) - p(x_-1)`: positive in the bistable regime, zero at the
    /// singular homoclinic.
    pub fn discriminant(&self) -> f64 {
        self.x4.p - self.x_minus1.p
    }
}

/// Slow-flow context at fixed parameters and current.
#[derive(Clone, Debug)]
pub struct SlowFlow {
    manifold: CriticalManifold,
    folded: Vec<FoldedSingularity>,
    settings: IntegrationSettings,
}

impl SlowFlow {
    pub fn new(params: ModelParams) -> Result<Self> {
        let manifold = CriticalManifold::new(params)?;
        let folded = manifold.folded_singularities()?;
        let settings = IntegrationSettings {
            rel_tol: 1e-11,
            abs_tol: 1e-13,
            h_init: 1e-5,
            h_min: 1e-14,
            h_max: 0.05,
            t_max: SLOW_HORIZON,
        };
        Ok(Self {
            manifold,
            folded,
            settings,
        })
    }

    pub fn manifold(&self) -> &CriticalManifold {
        &self.manifold
    }

    pub fn params(&self) -> &ModelParams {
        self.manifold.params()
    }

    pub fn folded_singularities(&self) -> &[FoldedSingularity] {
        &self.folded
    }

    pub fn equilibria(&self) -> Vec<ReducedEquilibrium> {
        equilibria(&self.manifold)
    }

    fn fold_event(&self, direction: Direction) -> EventSpec<'_, 3> {
        let m = &self.manifold;
        EventSpec::new(direction, move |x: &[f64; 3]| m.dv_ionic(x[0], x[1], x[2]))
    }

    fn domain_event(&self) -> EventSpec<'_, 3> {
        EventSpec::new(Direction::Falling, |x: &[f64; 3]| {
            (x[0] - V_MIN).min(V_MAX - x[0])
        })
    }

    /// Snap a fold-event state onto the exact fold at the same `p`.
    fn snap_to_fold(&self, x: &[f64; 3]) -> Result<ChartPoint> {
        let fold = if x[0] < self.manifold.v_inflection() {
            Branch::Fl
        } else {
            Branch::Fh
        };
        self.manifold.fold_at_p(fold, x[2])
    }

    /// Follow the reduced flow from a point of `S_l` or `S_h` until it reaches
    /// a fold (maps `Pi_l`, `Pi_h`).
    pub fn slow_transit(&self, start: &ChartPoint) -> Result<SlowTransit> {
        let dv = self.manifold.dv_ionic(start.v, start.n, start.p);
        if !(dv > 0.0) {
            return Err(Error::NotOnStableBranch { dv });
        }
        let params = *self.params();
        let integ = Integrator::new(
            move |_, x: &[f64; 3]| lifted_desing_field(x, &params),
            self.settings,
        );
        let events = [self.fold_event(Direction::Falling), self.domain_event()];
        let mut slow = 0usize;
        let run = integ.run(0.0, start.state().to_array(), &events, &mut |_, _, f| {
            let speed = libm::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
            slow = if speed < REST_SPEED { slow + 1 } else { 0 };
            if slow >= REST_STEPS {
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        let mut path: Vec<FullState> = run
            .trajectory
            .x
            .iter()
            .map(|x| FullState::from_array(*x))
            .collect();
        match run.end {
            Termination::Event(hit) if hit.index == 0 => {
                let arrival = self.snap_to_fold(&hit.state)?;
                if self.folded.iter().any(|f| {
                    f.fold == arrival.branch && f.state.distance(&arrival.state()) < FOLDED_GUARD
                }) {
                    return Err(Error::HitFoldedSingularity {
                        state: arrival.state(),
                    });
                }
                if let Some(last) = path.last_mut() {
                    *last = arrival.state();
                }
                Ok(SlowTransit {
                    arrival,
                    time: hit.t,
                    path,
                })
            }
            Termination::Event(hit) => Err(Error::LeftDomain {
                state: FullState::from_array(hit.state),
            }),
            Termination::Stopped => Err(Error::ConvergedToEquilibrium {
                state: FullState::from_array(run.state),
            }),
            Termination::Horizon => Err(crate::ode::OdeError::NoEvent { t: run.t }.into()),
        }
    }

    /// Fast jump followed by a slow transit.
    fn jump_and_transit(&self, from: &ChartPoint) -> Result<(ChartPoint, SlowTransit)> {
        let landing = self.manifold.fast_jump(from)?;
        let transit = self.slow_transit(&landing)?;
        Ok((landing, transit))
    }

    /// The reduced saddle `x_m` on `S_l`, if the phase portrait has one.
    pub fn middle_saddle(&self) -> Result<ReducedEquilibrium> {
        let eqs = self.equilibria();
        if eqs.len() != 3 {
            return Err(Error::WrongScenario(
                "the reduced flow needs three equilibria",
            ));
        }
        let xm = eqs[1];
        if xm.family != Family::Xm {
            return Err(Error::WrongScenario(
                "middle equilibrium is not on the middle i-v branch",
            ));
        }
        if xm.branch != Branch::Sl {
            return Err(Error::WrongScenario("x_m is not on S_l"));
        }
        Ok(xm)
    }

    fn shoot(&self, x0: FullState, forward: bool, saddle: &FullState) -> Result<ManifoldBranch> {
        let params = *self.params();
        let sign = if forward { 1.0 } else { -1.0 };
        let g_p = params.gate_p.g;
        let m = &self.manifold;
        let settings = self.settings.with_t_max(MANIFOLD_HORIZON);
        let integ = Integrator::new(
            move |_, x: &[f64; 3]| {
                let f = lifted_desing_field(x, &params);
                [sign * f[0], sign * f[1], sign * f[2]]
            },
            settings,
        );
        let p_l_event = EventSpec::new(Direction::Either, move |x: &[f64; 3]| {
            match m.p_l_point(x[2]) {
                Ok(q) => x[0] - q.v,
                Err(_) => f64::NAN,
            }
        })
        .non_terminal();
        let events = [
            self.fold_event(Direction::Either),
            EventSpec::new(Direction::Falling, move |x: &[f64; 3]| {
                (x[2] + P_MARGIN).min(g_p + P_MARGIN - x[2])
            }),
            self.domain_event(),
            p_l_event,
        ];
        let mut arc = 0.0;
        let mut prev = x0.to_array();
        let mut slow = 0usize;
        let mut stop = BranchEnd::Horizon;
        let run = integ.run(0.0, x0.to_array(), &events, &mut |_, x, f| {
            arc += libm::hypot(x[0] - prev[0], x[2] - prev[2]);
            prev = *x;
            let speed = libm::sqrt(f[0] * f[0] + f[1] * f[1] + f[2] * f[2]);
            slow = if speed < REST_SPEED { slow + 1 } else { 0 };
            if slow >= REST_STEPS {
                stop = BranchEnd::Equilibrium;
                Control::Stop
            } else if arc >= MANIFOLD_ARC_LENGTH {
                stop = BranchEnd::ArcLength;
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        let mut path = Vec::with_capacity(run.trajectory.len() + 1);
        path.push(*saddle);
        path.extend(run.trajectory.x.iter().map(|x| FullState::from_array(*x)));
        let mut fold = None;
        let end = match run.end {
            Termination::Event(hit) => match hit.index {
                0 => {
                    let cp = self.snap_to_fold(&hit.state)?;
                    fold = Some(cp);
                    if let Some(last) = path.last_mut() {
                        *last = cp.state();
                    }
                    BranchEnd::Fold
                }
                1 => BranchEnd::PWindow,
                _ => BranchEnd::Domain,
            },
            Termination::Stopped => stop,
            Termination::Horizon => BranchEnd::Horizon,
        };
        let mut p_l_crossings = Vec::new();
        for hit in run.hits.iter().filter(|h| h.index == 3) {
            p_l_crossings.push(self.manifold.p_l_point(hit.state[2])?);
        }
        if !forward {
            path.reverse();
        }
        Ok(ManifoldBranch {
            path,
            end,
            fold,
            p_l_crossings,
        })
    }

    /// Stable and unstable manifolds of the saddle `x_m` by eigenvector shooting.
    pub fn saddle_manifolds(&self, xm: &ReducedEquilibrium) -> Result<SaddleManifolds> {
        let lin = desing_jacobian(xm.v, xm.p, self.params())?;
        let [l0, l1] = lin.eigenvalues;
        if !(l0.is_real() && l0.re < 0.0 && l1.re > 0.0) {
            return Err(Error::NotASaddle { v: xm.v });
        }
        let saddle = xm.state();
        let params = self.params();
        let offset = |e: [f64; 2], s: f64| -> Result<FullState> {
            let v = xm.v + s * SHOOT_OFFSET * e[0];
            let p = xm.p + s * SHOOT_OFFSET * e[1];
            Ok(FullState::new(v, chart_n(v, p, params)?, p))
        };
        let es = eigvec2(&lin.jacobian, l0.re);
        let eu = eigvec2(&lin.jacobian, l1.re);
        let stable = [
            self.shoot(offset(es, 1.0)?, false, &saddle)?,
            self.shoot(offset(es, -1.0)?, false, &saddle)?,
        ];
        let unstable = [
            self.shoot(offset(eu, 1.0)?, true, &saddle)?,
            self.shoot(offset(eu, -1.0)?, true, &saddle)?,
        ];
        let x1 = unstable
            .iter()
            .filter_map(|b| b.fold.filter(|f| f.branch == Branch::Fl))
            .next()
            .ok_or(Error::NoFoldCrossing)?;
        // the stable branch that climbs in p is the separatrix on P_l
        let x_minus1 = stable
            .iter()
            .filter_map(|b| b.p_l_crossings.first().copied())
            .max_by(|a, b| a.p.total_cmp(&b.p));
        Ok(SaddleManifolds {
            saddle: *xm,
            stable,
            unstable,
            x1,
            x_minus1,
        })
    }

    /// Landmarks of the singular phase portrait around `x_m`.
    pub fn landmarks(&self) -> Result<(Landmarks, SaddleManifolds)> {
        let xm = self.middle_saddle()?;
        let sm = self.saddle_manifolds(&xm)?;
        let x_minus1 = sm.x_minus1.ok_or(Error::NoSectionCrossing)?;
        let x1 = sm.x1;
        let (x2, t23) = self.jump_and_transit(&x1)?;
        let x3 = t23.arrival;
        let x4 = self.manifold.fast_jump(&x3)?;
        let orbit = SingularOrbit {
            legs: vec![
                Leg::Fast { from: x1, to: x2 },
                t23.leg(Branch::Sh),
                Leg::Fast { from: x3, to: x4 },
            ],
        };
        Ok((
            Landmarks {
                x_m: xm,
                x1,
                x2,
                x3,
                x4,
                x_minus1,
                orbit,
            },
            sm,
        ))
    }

    /// Singular return map on `P_l` for the current landmarks.
    pub fn poincare_map(&self) -> Result<PoincareMap<'_>> {
        let (landmarks, _) = self.landmarks()?;
        Ok(PoincareMap {
            flow: self,
            landmarks,
        })
    }
}

/// The singular return map `Pi = Pi_f o Pi_h o Pi_f o Pi_l` on `I_l`.
#[derive(Clone, Debug)]
pub struct PoincareMap<'a> {
    flow: &'a SlowFlow,
    landmarks: Landmarks,
}

/// Image of one point under the return map.
#[derive(Clone, Debug, PartialEq)]
pub struct ReturnImage {
    pub p: f64,
    pub orbit: SingularOrbit,
}

impl PoincareMap<'_> {
    pub fn landmarks(&self) -> &Landmarks {
        &self.landmarks
    }

    /// `I_l = [p(x_4), g_p]`.
    pub fn interval(&self) -> (f64, f64) {
        (self.landmarks.x4.p, self.flow.params().gate_p.g)
    }

    /// `I_h = [p(x_2), g_p]`.
    pub fn interval_h(&self) -> (f64, f64) {
        (self.landmarks.x2.p, self.flow.params().gate_p.g)
    }

    fn check(p: f64, (lo, hi): (f64, f64)) -> Result<()> {
        if p < lo - INTERVAL_SLACK || p > hi + INTERVAL_SLACK {
            return Err(Error::OutOfInterval { p, lo, hi });
        }
        Ok(())
    }

    pub fn apply(&self, p: f64) -> Result<ReturnImage> {
        Self::check(p, self.interval())?;
        let m = self.flow.manifold();
        let start = m.p_l_point(p)?;
        let low = self.flow.slow_transit(&start)?;
        let (high_start, high) = self.flow.jump_and_transit(&low.arrival)?;
        Self::check(high_start.p, self.interval_h())?;
        let end = m.fast_jump(&high.arrival)?;
        Self::check(end.p, self.interval())?;
        let orbit = SingularOrbit {
            legs: vec![
                low.leg(Branch::Sl),
                Leg::Fast {
                    from: low.arrival,
                    to: high_start,
                },
                high.leg(Branch::Sh),
                Leg::Fast {
                    from: high.arrival,
                    to: end,
                },
            ],
        };
        Ok(ReturnImage { p: end.p, orbit })
    }

    /// Fixed point of the return map by bisection on `Pi(p) - p` over `I_l`.
    pub fn fixed_point(&self) -> Result<RelaxationOscillation> {
        let (lo, hi) = self.interval();
        let mut failure = None;
        let g = |p: f64| match self.apply(p) {
            Ok(r) => r.p - p,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        };
        let root = bisect(g, lo, hi, 0.0);
        if let Some(e) = failure {
            return Err(e);
        }
        let p_star = root.ok_or(Error::NoFixedPoint)?;
        let image = self.apply(p_star)?;
        let h = 1e-5;
        let multiplier = (self.apply(p_star + h)?.p - self.apply(p_star - h)?.p) / (2.0 * h);
        Ok(RelaxationOscillation {
            p_star,
            residual: image.p - p_star,
            multiplier,
            orbit: image.orbit,
        })
    }
}

/// A singular relaxation oscillation: fixed point of the return map.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxationOscillation {
    pub p_star: f64,
    /// `Pi(p*) - p*`.
    pub residual: f64,
    /// `dPi/dp` at `p*` by central difference.
    pub multiplier: f64,
    pub orbit: SingularOrbit,
}

pub fn relaxation_oscillation(params: &ModelParams) -> Result<RelaxationOscillation> {
    let flow = SlowFlow::new(*params)?;
    let map = flow.poincare_map()?;
    let verdict = map.flow.slow_transit(&map.landmarks.x4);
    if let Err(Error::ConvergedToEquilibrium { .. }) = verdict {
        return Err(Error::WrongScenario(
            "the system is monostable at this current",
        ));
    }
    map.fixed_point()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Bistable,
    Monostable,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::Bistable => "bistable",
            Verdict::Monostable => "monostable",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub i: f64,
    pub verdict: Verdict,
    pub landmarks: Landmarks,
    /// `x_1 -> x_4` followed by the slow trajectory from `x_4`, which ends on
    /// `F_l` at `x_5` when bistable and near `x_l` when monostable.
    pub witness: SingularOrbit,
}

impl StabilityReport {
    pub fn p_x4(&self) -> f64 {
        self.landmarks.x4.p
    }

    pub fn p_x_minus1(&self) -> f64 {
        self.landmarks.x_minus1.p
    }
}

/// Rest-spike classification from the fate of the slow trajectory through `x_4`.
pub fn classify_stability(params: &ModelParams) -> Result<StabilityReport> {
    let flow = SlowFlow::new(*params)?;
    let (landmarks, _) = flow.landmarks()?;
    let mut witness = landmarks.orbit.clone();
    let (verdict, tail) = match flow.slow_transit(&landmarks.x4) {
        Ok(t) => (Verdict::Bistable, t.path),
        Err(Error::ConvergedToEquilibrium { state }) => {
            (Verdict::Monostable, vec![landmarks.x4.state(), state])
        }
        Err(e) => return Err(e),
    };
    witness.extend(SingularOrbit {
        legs: vec![Leg::Slow {
            branch: Branch::Sl,
            path: tail,
        }],
    });
    Ok(StabilityReport {
        i: params.i,
        verdict,
        landmarks,
        witness,
    })
}

/// `p(x_4) - p(x_-1)` at the current in `params`.
pub fn homoclinic_discriminant(params: &ModelParams) -> Result<f64> {
    Ok(SlowFlow::new(*params)?.landmarks()?.0.discriminant())
}

/// Currents bounding the scenario with `x_m` on `S_l`: the current `i_c` at
/// which `x_m` crosses `F_l`, and the upper saddle-node current where `x_l`
/// and `x_m` merge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScenarioRange {
    pub i_c: f64,
    pub i_upper: f64,
    pub i_lower: f64,
}

pub fn scenario_range(params: &ModelParams) -> Result<ScenarioRange> {
    let (v_lo, v_hi) = iv_folds(params).ok_or(Error::NotSShaped)?;
    let (ia, ib) = (iv_curve(v_lo, params).0, iv_curve(v_hi, params).0);
    let (i_lower, i_upper) = (ia.min(ib), ia.max(ib));
    let on_fold = |v: f64| {
        let s = FullState::new(v, params.s_n(v), params.s_p(v));
        params.ionic_current_dv(&s)
    };
    let i_c = find_roots(on_fold, v_lo, v_hi, EQUILIBRIUM_SCAN, 0.0)
        .first()
        .map(|&v| iv_curve(v, params).0)
        .unwrap_or(i_lower);
    Ok(ScenarioRange {
        i_c,
        i_upper,
        i_lower,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomoclinicResult {
    pub i_h: f64,
    /// `dD/di` at `i_H`; nonzero means the singular homoclinic is transversal.
    pub dd_di: f64,
    /// `D(i_H)`.
    pub residual: f64,
    pub range: ScenarioRange,
}

impl HomoclinicResult {
    pub fn bistable_interval(&self) -> (f64, f64) {
        (self.i_h, self.range.i_upper)
    }

    pub fn bistable_midpoint(&self) -> f64 {
        0.5 * (self.i_h + self.range.i_upper)
    }
}

const HOMOCLINIC_SCAN: usize = 40;

/// Singular homoclinic current `i_H`, where `x_4 = x_-1`, located on the
/// scenario range by a scan of the discriminant and bisection.
pub fn singular_homoclinic(params: &ModelParams) -> Result<HomoclinicResult> {
    let range = scenario_range(params)?;
    singular_homoclinic_in(params, range, (range.i_c, range.i_upper))
}

pub fn singular_homoclinic_in(
    params: &ModelParams,
    range: ScenarioRange,
    (lo, hi): (f64, f64),
) -> Result<HomoclinicResult> {
    let d = |i: f64| homoclinic_discriminant(&params.with_current(i)).ok();
    let h = (hi - lo) / HOMOCLINIC_SCAN as f64;
    let mut prev: Option<(f64, f64)> = None;
    let mut bracket = None;
    for k in 1..HOMOCLINIC_SCAN {
        let i = lo + h * k as f64;
        let Some(di) = d(i) else {
            prev = None;
            continue;
        };
        if let Some((ip, dp)) = prev {
            if dp < 0.0 && di >= 0.0 {
                bracket = Some((ip, i));
                break;
            }
        }
        prev = Some((i, di));
    }
    let (a, b) = bracket.ok_or(Error::NoSignChange)?;
    let i_h = bisect(|i| d(i).unwrap_or(f64::NAN), a, b, 1e-12).ok_or(Error::NoSignChange)?;
    let residual = d(i_h).ok_or(Error::NoSignChange)?;
    let step = 1e-6;
    let dd_di = match (d(i_h + step), d(i_h - step)) {
        (Some(u), Some(l)) => (u - l) / (2.0 * step),
        _ => return Err(Error::NoSignChange),
    };
    Ok(HomoclinicResult {
        i_h,
        dd_di,
        residual,
        range,
    })
}
