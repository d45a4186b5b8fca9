//! Explicit adaptive Dormand-Prince 5(4) integrator with dense output and
//! event location.
//!
//! Time always runs forward; integrate backward by negating the field.

use alloc::boxed::Box;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum OdeError {
    #[error("invalid integration settings: {0}")]
    InvalidSettings(&'static str),
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("vector field returned a non-finite value at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("no event before the horizon t = {t}")]
    NoEvent { t: f64 },
    #[error("no periodic return after {returns} section crossings")]
    NotPeriodic { returns: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    /// Integration horizon, measured from the initial time.
    pub t_max: f64,
}

impl Default for IntegrationSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_init: 1e-4,
            h_min: 1e-14,
            h_max: 1.0,
            t_max: 100.0,
        }
    }
}

impl IntegrationSettings {
    pub fn validate(&self) -> Result<(), OdeError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(OdeError::InvalidSettings("tolerances must be positive"));
        }
        if !(self.h_min > 0.0 && self.h_min <= self.h_init && self.h_init <= self.h_max) {
            return Err(OdeError::InvalidSettings(
                "need 0 < h_min <= h_init <= h_max",
            ));
        }
        if !(self.t_max > 0.0) {
            return Err(OdeError::InvalidSettings("t_max must be positive"));
        }
        Ok(())
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self.h_init = self.h_init.min(h_max);
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Rising,
    Falling,
    Either,
}

/// Scalar event function `g(x)` with a crossing direction.
pub struct EventSpec<'a, const N: usize> {
    func: Box<dyn Fn(&[f64; N]) -> f64 + 'a>,
    pub direction: Direction,
    pub terminal: bool,
}

impl<'a, const N: usize> EventSpec<'a, N> {
    /// A terminal event.
    pub fn new(direction: Direction, func: impl Fn(&[f64; N]) -> f64 + 'a) -> Self {
        Self {
            func: Box::new(func),
            direction,
            terminal: true,
        }
    }

    pub fn non_terminal(mut self) -> Self {
        self.terminal = false;
        self
    }

    #[inline]
    pub fn eval(&self, x: &[f64; N]) -> f64 {
        (self.func)(x)
    }

    fn crossed(&self, g0: f64, g1: f64) -> bool {
        let rising = g0 < 0.0 && g1 >= 0.0;
        let falling = g0 > 0.0 && g1 <= 0.0;
        match self.direction {
            Direction::Rising => rising,
            Direction::Falling => falling,
            Direction::Either => rising || falling,
        }
    }
}

/// Samples `(t, x)` with strictly increasing `t`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory<const N: usize> {
    pub t: Vec<f64>,
    pub x: Vec<[f64; N]>,
}

impl<const N: usize> Trajectory<N> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn last(&self) -> Option<(f64, &[f64; N])> {
        self.t.last().copied().zip(self.x.last())
    }

    fn push(&mut self, t: f64, x: [f64; N]) {
        if self.t.last().is_none_or(|&last| t > last) {
            self.t.push(t);
            self.x.push(x);
        }
    }
}

/// What to keep from a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Record {
    /// Every accepted step.
    Steps,
    /// Dense-output samples on a uniform grid with the given spacing.
    Uniform(f64),
    /// Only the initial and final states.
    Endpoints,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventHit<const N: usize> {
    pub index: usize,
    pub t: f64,
    pub state: [f64; N],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Termination<const N: usize> {
    Event(EventHit<N>),
    /// The step observer asked to stop.
    Stopped,
    Horizon,
}

#[derive(Clone, Debug)]
pub struct Run<const N: usize> {
    pub trajectory: Trajectory<N>,
    /// Non-terminal event crossings in time order.
    pub hits: Vec<EventHit<N>>,
    pub end: Termination<N>,
    pub t: f64,
    pub state: [f64; N],
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

// Dormand-Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// |g| below which a run starting on an event surface waits before arming it.
const EVENT_ARM: f64 = 1e-9;
/// Target residual of a located event.
const EVENT_TOL: f64 = 1e-12;

/// Continuous extension of one accepted step.
struct Dense<const N: usize> {
    t0: f64,
    h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Dense<N> {
    fn at(&self, theta: f64) -> [f64; N] {
        let t1 = 1.0 - theta;
        core::array::from_fn(|j| {
            let r = &self.r;
            r[0][j] + theta * (r[1][j] + t1 * (r[2][j] + theta * (r[3][j] + t1 * r[4][j])))
        })
    }

    fn time(&self, theta: f64) -> f64 {
        self.t0 + theta * self.h
    }
}

#[inline]
fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    core::array::from_fn(|j| {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[j];
        }
        y[j] + h * acc
    })
}

fn all_finite<const N: usize>(x: &[f64; N]) -> bool {
    x.iter().all(|v| v.is_finite())
}

/// Adaptive integrator for `x' = f(t, x)`.
pub struct Integrator<F, const N: usize> {
    field: F,
    settings: IntegrationSettings,
    record: Record,
}

impl<F, const N: usize> Integrator<F, N>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    pub fn new(field: F, settings: IntegrationSettings) -> Self {
        Self {
            field,
            settings,
            record: Record::Steps,
        }
    }

    pub fn record(mut self, record: Record) -> Self {
        self.record = record;
        self
    }

    pub fn settings(&self) -> &IntegrationSettings {
        &self.settings
    }

    /// Integrate from `(t0, x0)` until a terminal event, the observer's
    /// request, or the horizon `t0 + t_max`.
    ///
    /// The observer sees every accepted step as `(t, x, f(t, x))`.
    pub fn run(
        &self,
        t0: f64,
        x0: [f64; N],
        events: &[EventSpec<'_, N>],
        observer: &mut dyn FnMut(f64, &[f64; N], &[f64; N]) -> Control,
    ) -> Result<Run<N>, OdeError> {
        let s = &self.settings;
        s.validate()?;
        let f = &self.field;
        let t_end = t0 + s.t_max;
        let mut t = t0;
        let mut y = x0;
        if !all_finite(&y) {
            return Err(OdeError::NonFiniteState { t });
        }
        let mut k1 = f(t, &y);
        if !all_finite(&k1) {
            return Err(OdeError::NonFiniteState { t });
        }
        let mut traj = Trajectory::default();
        traj.push(t, y);
        let mut out_index = 1u64;
        let out_time = |k: u64| match self.record {
            Record::Uniform(dt) if dt > 0.0 => t0 + dt * k as f64,
            _ => f64::INFINITY,
        };
        let mut next_out = out_time(out_index);
        let mut g_prev: Vec<f64> = events.iter().map(|e| e.eval(&y)).collect();
        let mut armed: Vec<bool> = g_prev
            .iter()
            .map(|g| !g.is_finite() || g.abs() > EVENT_ARM)
            .collect();
        let mut hits = Vec::new();
        let mut h = s.h_init;
        let mut accepted = 0usize;
        let mut rejected = 0usize;

        loop {
            if t >= t_end {
                return Ok(self.finish(traj, hits, Termination::Horizon, t, y, accepted, rejected));
            }
            let mut h_try = h.min(s.h_max);
            let last = t + h_try >= t_end;
            if last {
                h_try = t_end - t;
            }

            let k2 = f(t + C2 * h_try, &axpy(&y, h_try, &[(A21, &k1)]));
            let k3 = f(t + C3 * h_try, &axpy(&y, h_try, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(
                t + C4 * h_try,
                &axpy(&y, h_try, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            );
            let k5 = f(
                t + C5 * h_try,
                &axpy(&y, h_try, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + h_try,
                &axpy(
                    &y,
                    h_try,
                    &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                ),
            );
            let y1 = axpy(
                &y,
                h_try,
                &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            );
            let k7 = f(t + h_try, &y1);
            let finite = [&k2, &k3, &k4, &k5, &k6, &k7, &y1]
                .iter()
                .all(|k| all_finite(k));
            if !finite {
                if h_try > s.h_min * 4.0 {
                    // overshoot into a region where the field blows up; retry smaller
                    h = h_try * 0.25;
                    rejected += 1;
                    continue;
                }
                return Err(OdeError::NonFiniteState { t });
            }

            let mut err = 0.0;
            for j in 0..N {
                let e = h_try
                    * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j]);
                let sc = s.abs_tol + s.rel_tol * y[j].abs().max(y1[j].abs());
                err += (e / sc) * (e / sc);
            }
            err = libm::sqrt(err / N as f64);

            if err > 1.0 {
                rejected += 1;
                if h_try <= s.h_min {
                    return Err(OdeError::StepUnderflow { t, h: h_try });
                }
                let factor = (0.9 * libm::pow(err, -0.2)).max(0.2);
                h = (h_try * factor).max(s.h_min);
                continue;
            }

            accepted += 1;
            let dense = {
                let r1 = y;
                let r2: [f64; N] = core::array::from_fn(|j| y1[j] - y[j]);
                let r3: [f64; N] = core::array::from_fn(|j| h_try * k1[j] - r2[j]);
                let r4: [f64; N] = core::array::from_fn(|j| r2[j] - h_try * k7[j] - r3[j]);
                let r5: [f64; N] = core::array::from_fn(|j| {
                    h_try
                        * (D1 * k1[j]
                            + D3 * k3[j]
                            + D4 * k4[j]
                            + D5 * k5[j]
                            + D6 * k6[j]
                            + D7 * k7[j])
                });
                Dense {
                    t0: t,
                    h: h_try,
                    r: [r1, r2, r3, r4, r5],
                }
            };
            let t1 = if last { t_end } else { t + h_try };

            // events on this step
            let mut first_terminal: Option<EventHit<N>> = None;
            let mut step_hits: Vec<EventHit<N>> = Vec::new();
            for (idx, ev) in events.iter().enumerate() {
                let g1 = ev.eval(&y1);
                if !armed[idx] {
                    if g1.is_finite() && g1.abs() > EVENT_ARM {
                        armed[idx] = true;
                    }
                    g_prev[idx] = g1;
                    continue;
                }
                let g0 = g_prev[idx];
                g_prev[idx] = g1;
                if !(g0.is_finite() && g1.is_finite()) || !ev.crossed(g0, g1) {
                    continue;
                }
                let (theta, state) = locate(ev, &dense, g0, g1);
                let hit = EventHit {
                    index: idx,
                    t: dense.time(theta),
                    state,
                };
                if ev.terminal {
                    if first_terminal.is_none_or(|h| hit.t < h.t) {
                        first_terminal = Some(hit);
                    }
                } else {
                    step_hits.push(hit);
                }
            }
            step_hits.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap_or(core::cmp::Ordering::Equal));
            let cutoff = first_terminal.map_or(f64::INFINITY, |h| h.t);
            hits.extend(step_hits.into_iter().filter(|h| h.t <= cutoff));

            let out_end = first_terminal.map_or(t1, |h| h.t);
            while next_out <= out_end {
                let theta = ((next_out - t) / h_try).clamp(0.0, 1.0);
                traj.push(next_out, dense.at(theta));
                out_index += 1;
                next_out = out_time(out_index);
            }
            if let Some(hit) = first_terminal {
                if self.record != Record::Endpoints {
                    traj.push(hit.t, hit.state);
                }
                return Ok(self.finish(
                    traj,
                    hits,
                    Termination::Event(hit),
                    hit.t,
                    hit.state,
                    accepted,
                    rejected,
                ));
            }
            if self.record == Record::Steps {
                traj.push(t1, y1);
            }

            t = t1;
            y = y1;
            k1 = k7;
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * libm::pow(err, -0.2)).clamp(0.2, 5.0)
            };
            if !last {
                h = (h_try * factor).clamp(s.h_min, s.h_max);
            }
            if observer(t, &y, &k1) == Control::Stop {
                return Ok(self.finish(traj, hits, Termination::Stopped, t, y, accepted, rejected));
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        mut trajectory: Trajectory<N>,
        hits: Vec<EventHit<N>>,
        end: Termination<N>,
        t: f64,
        state: [f64; N],
        accepted_steps: usize,
        rejected_steps: usize,
    ) -> Run<N> {
        if matches!(self.record, Record::Endpoints | Record::Steps) {
            trajectory.push(t, state);
        }
        Run {
            trajectory,
            hits,
            end,
            t,
            state,
            accepted_steps,
            rejected_steps,
        }
    }
}

/// Root of the event function on the dense output of one step. Illinois
/// regula falsi with a bisection fallback.
fn locate<const N: usize>(
    ev: &EventSpec<'_, N>,
    dense: &Dense<N>,
    g0: f64,
    g1: f64,
) -> (f64, [f64; N]) {
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let (mut ga, mut gb) = (g0, g1);
    let mut best = (1.0, dense.at(1.0), g1.abs());
    let mut side = 0i8;
    for iter in 0..200 {
        let mut m = if iter % 3 == 2 || (gb - ga) == 0.0 {
            0.5 * (a + b)
        } else {
            b - gb * (b - a) / (gb - ga)
        };
        if !(m > a && m < b) {
            m = 0.5 * (a + b);
        }
        let x = dense.at(m);
        let gm = ev.eval(&x);
        if !gm.is_finite() {
            break;
        }
        if gm.abs() < best.2 || (gm.abs() == best.2 && m < best.0) {
            best = (m, x, gm.abs());
        }
        if gm.abs() < EVENT_TOL || (b - a) * dense.h.abs() <= 1e-15 * dense.t0.abs().max(1.0) {
            break;
        }
        if (gm > 0.0) == (ga > 0.0) && ga != 0.0 {
            a = m;
            ga = gm;
            if side == -1 {
                gb *= 0.5;
            }
            side = -1;
        } else {
            b = m;
            gb = gm;
            if side == 1 {
                ga *= 0.5;
            }
            side = 1;
        }
    }
    (best.0, best.1)
}

/// Integrate over `[0, settings.t_max]`, keeping every accepted step.
pub fn integrate<F, const N: usize>(
    field: F,
    x0: [f64; N],
    settings: &IntegrationSettings,
) -> Result<Trajectory<N>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let run =
        Integrator::new(field, *settings).run(0.0, x0, &[], &mut |_, _, _| Control::Continue)?;
    Ok(run.trajectory)
}

/// Integrate until the first crossing of `event` in its direction.
pub fn integrate_to_event<F, const N: usize>(
    field: F,
    x0: [f64; N],
    event: EventSpec<'_, N>,
    settings: &IntegrationSettings,
) -> Result<([f64; N], f64, Trajectory<N>), OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let event = EventSpec {
        terminal: true,
        ..event
    };
    let run = Integrator::new(field, *settings).run(
        0.0,
        x0,
        core::slice::from_ref(&event),
        &mut |_, _, _| Control::Continue,
    )?;
    match run.end {
        Termination::Event(hit) => Ok((hit.state, hit.t, run.trajectory)),
        _ => Err(OdeError::NoEvent { t: run.t }),
    }
}

/// Result of [`periodic_return`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PeriodicReturn<const N: usize> {
    /// Last section crossing.
    pub state: [f64; N],
    /// Time between the last two crossings.
    pub period: f64,
    /// Number of crossings used.
    pub returns: usize,
    /// Ratio of the last two distances between consecutive crossings, when
    /// more than two were needed.
    pub contraction: Option<f64>,
}

pub const MAX_RETURNS: usize = 50;
pub const RETURN_TOL: f64 = 1e-7;
/// Field norm at a converged return below which the returns are spiralling
/// into a rest point rather than tracing a cycle.
const RETURN_MIN_SPEED: f64 = 1e-6;
/// Field norm below which a trajectory is treated as having reached a rest point.
const REST_SPEED: f64 = 1e-10;

/// Follow successive crossings of `section` until two consecutive ones agree
/// to [`RETURN_TOL`]. `settings.t_max` bounds each individual return; running
/// past it without a crossing is `NoEvent`, while coming to rest or failing
/// to converge is `NotPeriodic`.
pub fn periodic_return<F, const N: usize>(
    field: F,
    section: EventSpec<'_, N>,
    x0: [f64; N],
    settings: &IntegrationSettings,
) -> Result<PeriodicReturn<N>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
{
    let at_rest =
        |_: &[f64; N], f: &[f64; N]| libm::sqrt(f.iter().map(|c| c * c).sum::<f64>()) < REST_SPEED;
    periodic_return_until(field, section, x0, settings, at_rest)
}

/// [`periodic_return`] with a caller-supplied rest test on `(x, f(x))`; ten
/// consecutive accepted steps at rest end the search with `NotPeriodic`.
pub fn periodic_return_until<F, R, const N: usize>(
    field: F,
    section: EventSpec<'_, N>,
    x0: [f64; N],
    settings: &IntegrationSettings,
    at_rest: R,
) -> Result<PeriodicReturn<N>, OdeError>
where
    F: Fn(f64, &[f64; N]) -> [f64; N],
    R: Fn(&[f64; N], &[f64; N]) -> bool,
{
    let section = EventSpec {
        terminal: true,
        ..section
    };
    let integ = Integrator::new(&field, *settings).record(Record::Endpoints);
    let mut t = 0.0;
    let mut x = x0;
    let mut prev: Option<(f64, [f64; N])> = None;
    let mut prev_dist: Option<f64> = None;
    for k in 0..=MAX_RETURNS {
        let mut slow = 0usize;
        let run = integ.run(t, x, core::slice::from_ref(&section), &mut |_, x, f| {
            slow = if at_rest(x, f) { slow + 1 } else { 0 };
            if slow >= 10 {
                Control::Stop
            } else {
                Control::Continue
            }
        })?;
        let hit = match run.end {
            Termination::Event(hit) => hit,
            Termination::Horizon => return Err(OdeError::NoEvent { t: run.t }),
            Termination::Stopped => return Err(OdeError::NotPeriodic { returns: k }),
        };
        if let Some((t_prev, x_prev)) = prev {
            let d = libm::sqrt(
                x_prev
                    .iter()
                    .zip(&hit.state)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>(),
            );
            if d < RETURN_TOL {
                let f = field(hit.t, &hit.state);
                if libm::sqrt(f.iter().map(|c| c * c).sum::<f64>()) < RETURN_MIN_SPEED {
                    return Err(OdeError::NotPeriodic { returns: k + 1 });
                }
                return Ok(PeriodicReturn {
                    state: hit.state,
                    period: hit.t - t_prev,
                    returns: k + 1,
                    contraction: prev_dist.map(|pd| if pd > 0.0 { d / pd } else { 0.0 }),
                });
            }
            prev_dist = Some(d);
        }
        prev = Some((hit.t, hit.state));
        t = hit.t;
        x = hit.state;
    }
    Err(OdeError::NotPeriodic {
        returns: MAX_RETURNS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    #[test]
    fn exponential_decay() {
        let s = IntegrationSettings::default().with_t_max(1.0);
        let tr = integrate(|_, x: &[f64; 1]| [-x[0]], [1.0], &s).unwrap();
        let (t, x) = tr.last().unwrap();
        assert_eq!(t, 1.0);
        assert!((x[0] - libm::exp(-1.0)).abs() < 1e-8);
        assert!(tr.t.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn harmonic_oscillator_energy_drift() {
        let s = IntegrationSettings::default()
            .with_tolerances(1e-10, 1e-12)
            .with_t_max(200.0 * PI);
        let tr = integrate(|_, x: &[f64; 2]| [x[1], -x[0]], [1.0, 0.0], &s).unwrap();
        let (_, x) = tr.last().unwrap();
        let energy = 0.5 * (x[0] * x[0] + x[1] * x[1]);
        assert!((energy - 0.5).abs() < 1e-6, "{energy}");
    }

    #[test]
    fn linear_crossing_event() {
        let s = IntegrationSettings::default().with_t_max(10.0);
        let ev = EventSpec::new(Direction::Rising, |x: &[f64; 1]| x[0] - 1.0);
        let (x, t, _) = integrate_to_event(|_, _: &[f64; 1]| [1.0], [0.0], ev, &s).unwrap();
        assert!((t - 1.0).abs() < 1e-9);
        assert!((x[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn direction_filter_and_missing_event() {
        let s = IntegrationSettings::default().with_t_max(10.0);
        let ev = EventSpec::new(Direction::Falling, |x: &[f64; 1]| x[0] - 1.0);
        let r = integrate_to_event(|_, _: &[f64; 1]| [1.0], [0.0], ev, &s);
        assert!(matches!(r, Err(OdeError::NoEvent { .. })));
        let ev = EventSpec::new(Direction::Either, |_: &[f64; 1]| 1.0);
        let r = integrate_to_event(|_, x: &[f64; 1]| [-x[0]], [3.0], ev, &s);
        assert!(matches!(r, Err(OdeError::NoEvent { .. })));
    }

    #[test]
    fn rotation_period() {
        let s = IntegrationSettings::default().with_t_max(20.0);
        let sec = EventSpec::new(Direction::Rising, |x: &[f64; 2]| x[1]);
        let r = periodic_return(|_, x: &[f64; 2]| [-x[1], x[0]], sec, [1.0, 0.0], &s).unwrap();
        assert!((r.period - 2.0 * PI).abs() < 1e-7, "{}", r.period);
        assert!((r.state[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn decaying_spiral_is_not_periodic() {
        let s = IntegrationSettings::default().with_t_max(200.0);
        let sec = EventSpec::new(Direction::Rising, |x: &[f64; 2]| x[1]);
        let r = periodic_return(
            |_, x: &[f64; 2]| [-x[1] - 0.5 * x[0], x[0] - 0.5 * x[1]],
            sec,
            [1.0, 0.0],
            &s,
        );
        assert!(matches!(r, Err(OdeError::NotPeriodic { .. })), "{r:?}");
        let sec = EventSpec::new(Direction::Rising, |x: &[f64; 1]| x[0] - 5.0);
        let r = periodic_return(|_, x: &[f64; 1]| [-x[0]], sec, [1.0], &s);
        assert!(matches!(r, Err(OdeError::NotPeriodic { returns: 0 })));
        let sec = EventSpec::new(Direction::Rising, |x: &[f64; 1]| x[0] - 5.0);
        let r = periodic_return(|_, _: &[f64; 1]| [-1.0], sec, [1.0], &s);
        assert!(matches!(r, Err(OdeError::NoEvent { .. })));
    }

    #[test]
    fn uniform_sampling_matches_analytic_solution() {
        let s = IntegrationSettings::default().with_t_max(2.0);
        let run = Integrator::new(|_, x: &[f64; 1]| [-x[0]], s)
            .record(Record::Uniform(0.1))
            .run(0.0, [1.0], &[], &mut |_, _, _| Control::Continue)
            .unwrap();
        assert_eq!(run.trajectory.len(), 21);
        for (t, x) in run.trajectory.t.iter().zip(&run.trajectory.x) {
            assert!((x[0] - libm::exp(-t)).abs() < 1e-8);
        }
    }

    #[test]
    fn tolerance_refinement_reduces_error_at_order_at_least_four() {
        let mut prev_err = f64::INFINITY;
        let mut pts = std::vec::Vec::new();
        for k in 0..8 {
            let tol = 1e-4 * libm::pow(0.5, k as f64 * 1.5);
            let s = IntegrationSettings {
                rel_tol: tol,
                abs_tol: tol,
                h_init: 1e-3,
                ..Default::default()
            }
            .with_t_max(5.0);
            let run = Integrator::new(|_, x: &[f64; 1]| [-x[0]], s)
                .run(0.0, [1.0], &[], &mut |_, _, _| Control::Continue)
                .unwrap();
            let err = (run.state[0] - libm::exp(-5.0)).abs();
            assert!(err <= prev_err, "tol {tol}: {err} > {prev_err}");
            prev_err = err;
            pts.push((libm::log(run.accepted_steps as f64), libm::log(err)));
        }
        let (x0, y0) = pts[0];
        let (x1, y1) = pts[pts.len() - 1];
        let order = -(y1 - y0) / (x1 - x0);
        assert!(order >= 4.0, "observed order {order}");
    }

    #[test]
    fn settings_validation() {
        let bad = IntegrationSettings {
            h_min: 1.0,
            h_init: 0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let r = integrate(|_, x: &[f64; 1]| [x[0]], [1.0], &bad);
        assert!(matches!(r, Err(OdeError::InvalidSettings(_))));
    }

    #[test]
    fn non_finite_field_is_reported() {
        let s = IntegrationSettings::default().with_t_max(1.0);
        let r = integrate(|_, _: &[f64; 1]| [f64::NAN], [1.0], &s);
        assert!(matches!(r, Err(OdeError::NonFiniteState { .. })));
    }
}
