use rayon::prelude::*;
use restspike_core::bifurcation::{
    descending_grid, detect_equilibrium_bifurcations, equilibrium_branch, singular_cycle_seed,
    stable_equilibria, sweep_cycles, CycleFamily, FamilyEnd,
};
use restspike_core::manifold::{CriticalManifold, FoldCurve, FoldedSingularity};
use restspike_core::model::FullSystem;
use restspike_core::ode::{Control, Integrator, Record};
use restspike_core::reduced::{
    classify_stability, relaxation_oscillation, scenario_range, singular_homoclinic,
    singular_homoclinic_in, Leg, SingularOrbit, SlowFlow, Verdict,
};
use restspike_core::{Error, FullState, ModelParams};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{Cell, Csv, OutDir};

type Result<T, E = CliError> = std::result::Result<T, E>;

fn bool_cell(b: bool) -> Cell<'static> {
    Cell::Int(b as usize)
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

/// `--i`, else the configured current, else the middle of the bistable
/// interval of the singular limit.
pub fn resolve_current(cfg: &RunConfig, flag: Option<f64>) -> Result<f64> {
    if let Some(i) = flag.or(cfg.i) {
        if !i.is_finite() {
            return Err(CliError::Config("applied current must be finite".into()));
        }
        return Ok(i);
    }
    Ok(singular_homoclinic(&cfg.params())?.bistable_midpoint())
}

fn default_starts(params: &ModelParams) -> Result<Vec<FullState>> {
    let mut starts = Vec::new();
    if let Some(rest) = stable_equilibria(params).first() {
        let mut x = *rest;
        x.v += 1e-3;
        starts.push(x);
    }
    match singular_cycle_seed(params) {
        Ok(seed) => starts.push(seed),
        Err(e) if starts.is_empty() => return Err(e.into()),
        Err(_) => {}
    }
    Ok(starts)
}

pub fn simulate(cfg: &RunConfig, i: f64, out: &mut OutDir) -> Result<()> {
    let params = cfg.params().with_current(i);
    let sys = FullSystem::new(params)?;
    let starts = match &cfg.x0 {
        Some(x0) => x0.iter().map(|x| FullState::from_array(*x)).collect(),
        None => default_starts(&params)?,
    };
    let settings = cfg.integration().with_t_max(cfg.t_end);
    let field = |_: f64, x: &[f64; 3]| sys.field(x);
    for (k, x0) in starts.iter().enumerate() {
        let run = Integrator::new(field, settings)
            .record(Record::Uniform(cfg.dt_out))
            .run(0.0, x0.to_array(), &[], &mut |_, _, _| Control::Continue)
            .map_err(Error::from)?;
        let mut csv = Csv::new(&["t", "v", "n", "p"]);
        for (t, x) in run.trajectory.t.iter().zip(&run.trajectory.x) {
            csv.row(&[(*t).into(), x[0].into(), x[1].into(), x[2].into()]);
        }
        out.csv(&format!("trajectory_{k}.csv"), &csv)?;
    }
    Ok(())
}

fn fold_rows(csv: &mut Csv, curves: &[&FoldCurve]) {
    for c in curves {
        for s in &c.samples {
            csv.row(&[c.label.label().into(), s.v.into(), s.n.into(), s.p.into()]);
        }
    }
}

fn folded_csv(list: &[FoldedSingularity]) -> Csv {
    let mut csv = Csv::new(&[
        "i",
        "v",
        "n",
        "p",
        "type",
        "re_lambda1",
        "im_lambda1",
        "re_lambda2",
        "im_lambda2",
    ]);
    for f in list {
        let [a, b] = f.eigenvalues;
        csv.row(&[
            f.i.into(),
            f.state.v.into(),
            f.state.n.into(),
            f.state.p.into(),
            f.kind.label().into(),
            a.re.into(),
            a.im.into(),
            b.re.into(),
            b.im.into(),
        ]);
    }
    csv
}

pub fn manifold(cfg: &RunConfig, i: f64, out: &mut OutDir) -> Result<()> {
    let m = CriticalManifold::new(cfg.params().with_current(i))?;
    let g_p = cfg.g_p;

    let mut grid = Csv::new(&["v", "p", "n", "branch"]);
    for v in linspace(cfg.grid_v_lo, cfg.grid_v_hi, cfg.grid_v) {
        for p in linspace(0.0, g_p, cfg.grid_p) {
            match m.point(v, p) {
                Ok(cp) => grid.row(&[v.into(), p.into(), cp.n.into(), cp.branch.label().into()]),
                Err(Error::ChartSingular { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    out.csv("manifold_grid.csv", &grid)?;

    let (fl, fh) = m.fold_locus(cfg.fold_samples, true)?;
    let mut folds = Csv::new(&["label", "v", "n", "p"]);
    fold_rows(&mut folds, &[&fl, &fh]);
    out.csv("fold_curves.csv", &folds)?;
    let (fl_all, fh_all) = m.fold_locus(cfg.fold_samples, false)?;
    let mut folds = Csv::new(&["label", "v", "n", "p"]);
    fold_rows(&mut folds, &[&fl_all, &fh_all]);
    out.csv("fold_curves_full.csv", &folds)?;

    // P_l is the image of F_h, P_h the image of F_l
    let mut proj = Csv::new(&["label", "v", "n", "p"]);
    for (label, curve) in [("P_l", &fh), ("P_h", &fl)] {
        for s in &curve.samples {
            match m.fast_jump(&m.fold_point(s.v)?) {
                Ok(cp) => proj.row(&[label.into(), cp.v.into(), cp.n.into(), cp.p.into()]),
                Err(Error::NoLanding { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    out.csv("projections.csv", &proj)?;

    out.csv(
        "folded_singularities.csv",
        &folded_csv(&m.physical_folded_singularities()?),
    )?;
    Ok(())
}

fn orbit_csv(orbit: &SingularOrbit) -> Csv {
    let mut csv = Csv::new(&["leg_id", "kind", "v", "n", "p"]);
    for (k, leg) in orbit.legs.iter().enumerate() {
        let (kind, points) = match leg {
            Leg::Slow { branch, path } => (branch.label(), path.clone()),
            Leg::Fast { from, to } => ("fast", vec![from.state(), to.state()]),
        };
        for s in points {
            csv.row(&[k.into(), kind.into(), s.v.into(), s.n.into(), s.p.into()]);
        }
    }
    csv
}

pub fn reduced(cfg: &RunConfig, i: f64, out: &mut OutDir) -> Result<()> {
    let flow = SlowFlow::new(cfg.params().with_current(i))?;
    let eqs = flow.equilibria();
    if eqs.len() != 3 {
        eprintln!(
            "the reduced flow has {} equilibria at i = {i}; the phase portrait needs three",
            eqs.len()
        );
        return Err(Error::WrongScenario("the reduced flow needs three equilibria").into());
    }
    let mut csv = Csv::new(&["i", "v", "family", "class"]);
    for e in &eqs {
        csv.row(&[
            e.i.into(),
            e.v.into(),
            e.family.label().into(),
            e.class.label().into(),
        ]);
    }
    out.csv("equilibria.csv", &csv)?;
    let folded: Vec<_> = flow
        .folded_singularities()
        .iter()
        .filter(|f| f.physical)
        .copied()
        .collect();
    out.csv("folded_singularities.csv", &folded_csv(&folded))?;

    let (lm, sm) = flow.landmarks()?;
    let mut csv = Csv::new(&["branch_id", "v", "p"]);
    let branches = [
        ("stable_0", &sm.stable[0]),
        ("stable_1", &sm.stable[1]),
        ("unstable_0", &sm.unstable[0]),
        ("unstable_1", &sm.unstable[1]),
    ];
    for (id, b) in branches {
        for s in &b.path {
            csv.row(&[id.into(), s.v.into(), s.p.into()]);
        }
    }
    out.csv("saddle_manifolds.csv", &csv)?;

    let mut csv = Csv::new(&["label", "v", "n", "p"]);
    let x_m = lm.x_m.chart_point();
    for (label, cp) in [
        ("x_m", &x_m),
        ("x_1", &lm.x1),
        ("x_2", &lm.x2),
        ("x_3", &lm.x3),
        ("x_4", &lm.x4),
        ("x_-1", &lm.x_minus1),
    ] {
        csv.row(&[label.into(), cp.v.into(), cp.n.into(), cp.p.into()]);
    }
    out.csv("landmarks.csv", &csv)?;

    let report = classify_stability(flow.params())?;
    out.csv("witness_orbit.csv", &orbit_csv(&report.witness))?;
    if report.verdict == Verdict::Bistable {
        let ro = relaxation_oscillation(flow.params())?;
        out.csv("singular_orbit.csv", &orbit_csv(&ro.orbit))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct BistabilitySummary {
    #[serde(rename = "i_H")]
    i_h: f64,
    #[serde(rename = "dD_di")]
    dd_di: f64,
    bistable_interval: [f64; 2],
}

pub fn bistability(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let params = cfg.params();
    let grid = linspace(cfg.i_lo, cfg.i_hi, cfg.steps + 1);
    let rows: Vec<Result<(f64, std::result::Result<_, &str>)>> = grid
        .par_iter()
        .map(|&i| match classify_stability(&params.with_current(i)) {
            Ok(r) => Ok((i, Ok((r.verdict, r.p_x4(), r.p_x_minus1())))),
            Err(Error::WrongScenario(_) | Error::NotSShaped) => Ok((i, Err("wrong_scenario"))),
            // near i_c the unstable manifold of x_m runs into the folded node
            Err(Error::NoFoldCrossing | Error::NoSectionCrossing) => Ok((i, Err("no_landmarks"))),
            Err(e) => Err(e.into()),
        })
        .collect();
    let mut csv = Csv::new(&["i", "verdict", "p_x4", "p_xm1"]);
    for row in rows {
        match row? {
            (i, Ok((v, a, b))) => csv.row(&[i.into(), v.label().into(), a.into(), b.into()]),
            (i, Err(label)) => csv.row(&[i.into(), label.into(), Cell::Empty, Cell::Empty]),
        }
    }
    out.csv("bistability_sweep.csv", &csv)?;

    let range = scenario_range(&params)?;
    let lo = cfg.i_lo.max(range.i_c);
    let hi = cfg.i_hi.min(range.i_upper);
    if !(lo < hi) {
        return Err(Error::NoSignChange.into());
    }
    let h = singular_homoclinic_in(&params, range, (lo, hi))?;
    let mut csv = Csv::new(&["i_H", "dD_di"]);
    csv.row(&[h.i_h.into(), h.dd_di.into()]);
    out.csv("homoclinic.csv", &csv)?;
    let (a, b) = h.bistable_interval();
    let summary = BistabilitySummary {
        i_h: h.i_h,
        dd_di: h.dd_di,
        bistable_interval: [a, b],
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("plain numbers serialize");
    json.push('\n');
    out.write("bistability.json", &json)?;
    Ok(())
}

fn cycle_csv(family: &CycleFamily) -> Csv {
    let mut csv = Csv::new(&["i", "v_min", "v_max", "period", "stable"]);
    for c in &family.points {
        csv.row(&[
            c.i.into(),
            c.v_min.into(),
            c.v_max.into(),
            c.period.into(),
            bool_cell(c.stable),
        ]);
    }
    csv
}

pub fn bifdiag(cfg: &RunConfig, out: &mut OutDir) -> Result<()> {
    let params = cfg.params();
    let v_grid = linspace(cfg.branch_v_lo, cfg.branch_v_hi, cfg.branch_samples);
    let branch = equilibrium_branch(&v_grid, &params)?;
    let mut csv = Csv::new(&["i", "v", "re1", "im1", "re2", "im2", "re3", "im3", "stable"]);
    for b in &branch {
        let [e1, e2, e3] = b.eigenvalues;
        csv.row(&[
            b.i.into(),
            b.state.v.into(),
            e1.re.into(),
            e1.im.into(),
            e2.re.into(),
            e2.im.into(),
            e3.re.into(),
            e3.im.into(),
            bool_cell(b.stable),
        ]);
    }
    out.csv("equilibrium_branch.csv", &csv)?;
    let mut csv = Csv::new(&["i", "v", "type"]);
    for e in detect_equilibrium_bifurcations(&branch, &params) {
        csv.row(&[e.i.into(), e.v.into(), e.kind.label().into()]);
    }
    out.csv("bifurcation_events.csv", &csv)?;

    // the singular cycle at the middle of the bistable interval seeds every family
    let singular = singular_homoclinic(&params)?;
    let seed = singular_cycle_seed(&params.with_current(singular.bistable_midpoint()))?;
    let grid = descending_grid(cfg.i_lo, cfg.i_hi, cfg.steps);
    let mut eps_all = vec![cfg.eps];
    eps_all.extend(cfg.eps_list.iter().filter(|&&e| e != cfg.eps));
    let families: Vec<Result<CycleFamily>> = eps_all
        .par_iter()
        .map(|&eps| {
            let p = params.with_eps(eps);
            let settings = cfg.cycle_settings(&p)?;
            Ok(sweep_cycles(&p, &grid, seed, &settings)?)
        })
        .collect();

    let mut lost = None;
    let mut estimates = Csv::new(&[
        "eps",
        "i_H_eps",
        "distance",
        "end",
        "i_last",
        "i_lost",
        "last_period",
    ]);
    for (k, (&eps, family)) in eps_all.iter().zip(families).enumerate() {
        let family = match family {
            Ok(f) => f,
            Err(CliError::Core(e @ Error::CycleLost { .. })) => {
                eprintln!("eps = {eps}: {e}");
                lost.get_or_insert(e);
                if k == 0 {
                    let empty = CycleFamily {
                        points: Vec::new(),
                        end: FamilyEnd::RangeEnd,
                        last: None,
                    };
                    out.csv("cycle_branch.csv", &cycle_csv(&empty))?;
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        if k == 0 {
            out.csv("cycle_branch.csv", &cycle_csv(&family))?;
        }
        if k > 0 || cfg.eps_list.contains(&eps) {
            let i_h = family.end.boundary();
            let last = family.last;
            let (i_last, i_lost) = match family.end {
                FamilyEnd::Vanished { i_last, i_lost } => (Some(i_last), Some(i_lost)),
                FamilyEnd::PeriodCap { i } => (last.map(|c| c.i), Some(i)),
                FamilyEnd::RangeEnd => (None, None),
            };
            estimates.row(&[
                eps.into(),
                i_h.into(),
                i_h.map(|x| (x - singular.i_h).abs()).into(),
                family.end.label().into(),
                i_last.into(),
                i_lost.into(),
                last.map(|c| c.period).into(),
            ]);
        }
    }
    out.csv("homoclinic_estimates.csv", &estimates)?;
    match lost {
        Some(e) => Err(CliError::Partial(e)),
        None => Ok(()),
    }
}
