//! Full-system bifurcation analysis over the applied current: the
//! equilibrium branch with its saddle-node and Hopf points, and the family
//! of relaxation cycles traced by warm-started simulation.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{det3, eig3, Complex};
use crate::manifold::CriticalManifold;
use crate::manifold::{V_MAX, V_MIN};
use crate::model::{full_jacobian, FullState, FullSystem, ModelParams};
use crate::ode::{
    periodic_return_until, Control, Direction, EventSpec, IntegrationSettings, Integrator,
    OdeError, Record,
};
use crate::reduced::{iv_curve, relaxation_oscillation};
use crate::roots::{bisect, find_roots};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EquilibriumBranchPoint {
    pub i: f64,
    pub state: FullState,
    pub eigenvalues: [Complex; 3],
    pub stable: bool,
}

/// Equilibria of the full system parametrized by voltage, `i = i_s(v)`.
pub fn equilibrium_branch(
    v_grid: &[f64],
    params: &ModelParams,
) -> Result<Vec<EquilibriumBranchPoint>> {
    FullSystem::new(*params)?;
    v_grid
        .iter()
        .map(|&v| {
            let (i, state) = FullSystem::equilibrium_at(params, v);
            let jac = full_jacobian(&state, &params.with_current(i))?;
            let eigenvalues = eig3(&jac);
            let stable = eigenvalues.iter().all(|e| e.re < 0.0);
            Ok(EquilibriumBranchPoint {
                i,
                state,
                eigenvalues,
                stable,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BifurcationKind {
    SaddleNode,
    Hopf,
}

impl BifurcationKind {
    pub fn label(self) -> &'static str {
        match self {
            BifurcationKind::SaddleNode => "saddle_node",
            BifurcationKind::Hopf => "hopf",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BifurcationEvent {
    pub i: f64,
    pub v: f64,
    pub kind: BifurcationKind,
}

fn complex_pair_re(eig: &[Complex; 3]) -> Option<f64> {
    eig.iter().find(|e| e.im != 0.0).map(|e| e.re)
}

fn complex_pair_re_at(v: f64, params: &ModelParams) -> f64 {
    let (i, s) = FullSystem::equilibrium_at(params, v);
    match full_jacobian(&s, &params.with_current(i)) {
        Ok(j) => complex_pair_re(&eig3(&j)).unwrap_or(f64::NAN),
        Err(_) => f64::NAN,
    }
}

/// Saddle-nodes at sign changes of `i_s'` and Hopf points at sign changes of
/// the real part of a complex eigenvalue pair, each refined by bisection in `v`.
pub fn detect_equilibrium_bifurcations(
    branch: &[EquilibriumBranchPoint],
    params: &ModelParams,
) -> Vec<BifurcationEvent> {
    let mut out = Vec::new();
    for w in branch.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (va, vb) = (a.state.v, b.state.v);
        let slope = |v: f64| iv_curve(v, params).1;
        if (slope(va) > 0.0) != (slope(vb) > 0.0) {
            if let Some(v) = bisect(slope, va, vb, 1e-12) {
                out.push(BifurcationEvent {
                    i: iv_curve(v, params).0,
                    v,
                    kind: BifurcationKind::SaddleNode,
                });
            }
        }
        if let (Some(ra), Some(rb)) = (
            complex_pair_re(&a.eigenvalues),
            complex_pair_re(&b.eigenvalues),
        ) {
            if (ra > 0.0) != (rb > 0.0) {
                if let Some(v) = bisect(|v| complex_pair_re_at(v, params), va, vb, 1e-12) {
                    out.push(BifurcationEvent {
                        i: iv_curve(v, params).0,
                        v,
                        kind: BifurcationKind::Hopf,
                    });
                }
            }
        }
    }
    out
}

/// Saddle-node voltage located independently as a zero of `det J`.
pub fn zero_eigenvalue_crossing(va: f64, vb: f64, params: &ModelParams) -> Option<f64> {
    let det = |v: f64| {
        let (i, s) = FullSystem::equilibrium_at(params, v);
        full_jacobian(&s, &params.with_current(i))
            .map(|j| det3(&j))
            .unwrap_or(f64::NAN)
    };
    bisect(det, va, vb, 1e-12)
}

/// Distance to a stable equilibrium at which a trajectory counts as resting.
/// A speed test alone fails here: the explicit scheme keeps the state
/// jittering at the tolerance level on the stiff rest state.
const REST_DISTANCE: f64 = 1e-6;

/// Linearly stable equilibria of the full system at the current in `params`.
pub fn stable_equilibria(params: &ModelParams) -> Vec<FullState> {
    find_roots(
        |v| iv_curve(v, params).0 - params.i,
        V_MIN,
        V_MAX,
        2000,
        0.0,
    )
    .into_iter()
    .map(|v| FullSystem::equilibrium_at(params, v).1)
    .filter(|s| full_jacobian(s, params).is_ok_and(|j| eig3(&j).iter().all(|e| e.re < 0.0)))
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleSettings {
    /// Time discarded before looking for returns.
    pub transient: f64,
    /// The family is stopped once the period exceeds this.
    pub period_cap: f64,
    /// Poincare section `v = section_v`, crossed rising.
    pub section_v: f64,
    /// Resolution in `i` of the end of the family.
    pub refine_tol: f64,
    pub integration: IntegrationSettings,
}

impl CycleSettings {
    /// Defaults with the section at the inflection of the fast current,
    /// which every jump up from `F_l` crosses.
    pub fn new(params: &ModelParams) -> Result<Self> {
        let section_v = CriticalManifold::new(*params)?.v_inflection();
        Ok(Self {
            transient: 200.0,
            period_cap: 1e4,
            section_v,
            refine_tol: 1e-6,
            integration: IntegrationSettings {
                h_max: 0.1,
                ..IntegrationSettings::default()
            },
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleBranchPoint {
    pub i: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub p_max: f64,
    pub period: f64,
    /// From the contraction of successive returns.
    pub stable: bool,
    /// Section crossing of the converged cycle.
    pub state: FullState,
}

/// Outcome of locating a cycle at a single current.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CycleOutcome {
    Cycle(CycleBranchPoint),
    /// No section crossing within the period cap.
    PeriodCap,
    /// The trajectory came to rest or the returns did not converge.
    Lost,
}

/// Simulate past the transient from `x0` and converge onto a cycle through
/// the section.
pub fn cycle_at(
    params: &ModelParams,
    x0: FullState,
    settings: &CycleSettings,
) -> Result<CycleOutcome> {
    let sys = FullSystem::new(*params)?;
    let field = |_: f64, x: &[f64; 3]| sys.field(x);
    let transient = Integrator::new(field, settings.integration.with_t_max(settings.transient))
        .record(Record::Endpoints)
        .run(0.0, x0.to_array(), &[], &mut |_, _, _| Control::Continue)?;
    let sv = settings.section_v;
    let section = EventSpec::new(Direction::Rising, move |x: &[f64; 3]| x[0] - sv);
    let rest = stable_equilibria(params);
    let at_rest = |x: &[f64; 3], _: &[f64; 3]| {
        let s = FullState::from_array(*x);
        rest.iter().any(|e| e.distance(&s) < REST_DISTANCE)
    };
    let return_settings = settings.integration.with_t_max(settings.period_cap);
    let ret =
        match periodic_return_until(field, section, transient.state, &return_settings, at_rest) {
            Ok(r) => r,
            Err(OdeError::NoEvent { .. }) => return Ok(CycleOutcome::PeriodCap),
            Err(OdeError::NotPeriodic { .. }) => return Ok(CycleOutcome::Lost),
            Err(e) => return Err(e.into()),
        };
    if ret.period > settings.period_cap {
        return Ok(CycleOutcome::PeriodCap);
    }
    // one more period to read off the extremes
    let events = [
        EventSpec::new(Direction::Either, |x: &[f64; 3]| sys.field(x)[0]).non_terminal(),
        EventSpec::new(Direction::Falling, |x: &[f64; 3]| sys.field(x)[2]).non_terminal(),
    ];
    let run = Integrator::new(field, settings.integration.with_t_max(ret.period))
        .record(Record::Endpoints)
        .run(0.0, ret.state, &events, &mut |_, _, _| Control::Continue)?;
    let mut v_min = ret.state[0].min(run.state[0]);
    let mut v_max = ret.state[0].max(run.state[0]);
    let mut p_max = ret.state[2].max(run.state[2]);
    for h in &run.hits {
        v_min = v_min.min(h.state[0]);
        v_max = v_max.max(h.state[0]);
        p_max = p_max.max(h.state[2]);
    }
    Ok(CycleOutcome::Cycle(CycleBranchPoint {
        i: params.i,
        v_min,
        v_max,
        p_max,
        period: ret.period,
        stable: ret.contraction.is_none_or(|c| c < 1.0),
        state: FullState::from_array(ret.state),
    }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FamilyEnd {
    /// The period exceeded the cap at this current.
    PeriodCap { i: f64 },
    /// The cycle disappeared between `i_last` (still present) and `i_lost`,
    /// bracketed to the refinement tolerance.
    Vanished { i_last: f64, i_lost: f64 },
    /// The grid was exhausted with the cycle still present.
    RangeEnd,
}

impl FamilyEnd {
    /// Current at which the family ends, if it ends inside the range.
    pub fn boundary(&self) -> Option<f64> {
        match *self {
            FamilyEnd::PeriodCap { i } => Some(i),
            FamilyEnd::Vanished { i_last, i_lost } => Some(0.5 * (i_last + i_lost)),
            FamilyEnd::RangeEnd => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FamilyEnd::PeriodCap { .. } => "period_cap",
            FamilyEnd::Vanished { .. } => "vanished",
            FamilyEnd::RangeEnd => "range_end",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CycleFamily {
    /// Cycles at the grid currents.
    pub points: Vec<CycleBranchPoint>,
    pub end: FamilyEnd,
    /// Last cycle found. Near the end of the family it lies between grid
    /// currents.
    pub last: Option<CycleBranchPoint>,
}

/// Follow the cycle along `grid`, warm-starting each current from the
/// previous cycle. When a step fails the step is halved and retried from the
/// last cycle found, so the end of the family is bracketed to
/// `settings.refine_tol` by attempts that all start on a nearby cycle. Fails
/// with `CycleLost` only if no cycle is found at the first grid point.
pub fn sweep_cycles(
    params: &ModelParams,
    grid: &[f64],
    seed: FullState,
    settings: &CycleSettings,
) -> Result<CycleFamily> {
    let Some((&first, rest)) = grid.split_first() else {
        return Ok(CycleFamily {
            points: Vec::new(),
            end: FamilyEnd::RangeEnd,
            last: None,
        });
    };
    let mut good = match cycle_at(&params.with_current(first), seed, settings)? {
        CycleOutcome::Cycle(c) => c,
        _ => return Err(Error::CycleLost { i: first }),
    };
    let mut points = vec![good];
    for &target in rest {
        let full = target - good.i;
        let mut step = full;
        let mut capped = false;
        while good.i != target {
            let i = if (target - good.i).abs() <= step.abs() {
                target
            } else {
                good.i + step
            };
            match cycle_at(&params.with_current(i), good.state, settings)? {
                CycleOutcome::Cycle(c) => {
                    good = c;
                    step = (2.0 * step).clamp(-full.abs(), full.abs());
                }
                outcome => {
                    capped |= outcome == CycleOutcome::PeriodCap;
                    if step.abs() <= settings.refine_tol {
                        let end = if capped {
                            FamilyEnd::PeriodCap { i }
                        } else {
                            FamilyEnd::Vanished {
                                i_last: good.i,
                                i_lost: i,
                            }
                        };
                        return Ok(CycleFamily {
                            points,
                            end,
                            last: Some(good),
                        });
                    }
                    step *= 0.5;
                }
            }
        }
        points.push(good);
    }
    Ok(CycleFamily {
        points,
        end: FamilyEnd::RangeEnd,
        last: Some(good),
    })
}

/// Descending grid of `steps + 1` currents from `i_hi` to `i_lo`.
pub fn descending_grid(i_lo: f64, i_hi: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| i_hi - (i_hi - i_lo) * k as f64 / steps as f64)
        .collect()
}

/// Point of the singular relaxation oscillation on `P_l`, lifted to `(v, n, p)`.
pub fn singular_cycle_seed(params: &ModelParams) -> Result<FullState> {
    let ro = relaxation_oscillation(params)?;
    Ok(ro.orbit.legs[0].first())
}

/// Cycle family from `i_hi` down to `i_lo`, seeded by the singular
/// relaxation oscillation at `seed_i`.
pub fn limit_cycle_sweep(
    i_lo: f64,
    i_hi: f64,
    steps: usize,
    seed_i: f64,
    params: &ModelParams,
    settings: &CycleSettings,
) -> Result<CycleFamily> {
    if !(i_lo < i_hi) || steps == 0 {
        return Err(Error::InvalidParameter("need i_lo < i_hi and steps > 0"));
    }
    let seed = singular_cycle_seed(&params.with_current(seed_i))?;
    sweep_cycles(params, &descending_grid(i_lo, i_hi, steps), seed, settings)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HomoclinicEstimate {
    pub eps: f64,
    /// End of the cycle family, the estimate of `i_H(eps)`.
    pub i_h: Option<f64>,
    pub family: CycleFamily,
}

/// `i_H(eps)` as the low-current end of the cycle family at one `eps`.
pub fn homoclinic_estimate(
    params: &ModelParams,
    eps: f64,
    grid: &[f64],
    seed: FullState,
) -> Result<HomoclinicEstimate> {
    let p = params.with_eps(eps);
    let settings = CycleSettings::new(&p)?;
    let family = sweep_cycles(&p, grid, seed, &settings)?;
    Ok(HomoclinicEstimate {
        eps,
        i_h: family.end.boundary(),
        family,
    })
}
