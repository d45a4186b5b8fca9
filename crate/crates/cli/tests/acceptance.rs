//! Acceptance run: one PASS/FAIL line per criterion. The process fails when
//! a criterion fails outside `KNOWN_GAPS`.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use restspike_core::bifurcation::{
    cycle_at, descending_grid, detect_equilibrium_bifurcations, equilibrium_branch,
    singular_cycle_seed, stable_equilibria, sweep_cycles, BifurcationKind, CycleOutcome,
    CycleSettings, FamilyEnd,
};
use restspike_core::linalg::det3;
use restspike_core::manifold::{Branch, CriticalManifold, FoldedType};
use restspike_core::model::{full_jacobian, full_vector_field, FullSystem};
use restspike_core::ode::{
    integrate, integrate_to_event, Control, Direction, EventSpec, IntegrationSettings, Integrator,
    Record,
};
use restspike_core::reduced::{
    classify_stability, desing_jacobian, desing_vf, iv_curve, reduced_vf, singular_homoclinic,
    HomoclinicResult, ReducedClass, SlowFlow, Verdict,
};
use restspike_core::{FullState, ModelParams};

/// Criteria that cannot pass as stated; see the README.
const KNOWN_GAPS: &[u32] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
    /// Set when the only failing clause is the documented gap.
    known_gap: bool,
}

impl Outcome {
    fn new(pass: bool, detail: String) -> Self {
        Self {
            pass,
            detail,
            known_gap: false,
        }
    }
}

fn defaults() -> ModelParams {
    ModelParams::default()
}

fn singular() -> HomoclinicResult {
    singular_homoclinic(&defaults()).expect("singular homoclinic at the defaults")
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|k| lo + (hi - lo) * k as f64 / (count - 1) as f64)
        .collect()
}

fn rel_err(got: f64, want: f64) -> f64 {
    (got - want).abs() / want.abs().max(1.0)
}

fn algebraic_geometry() -> Outcome {
    let pr = defaults().with_current(-0.55);
    let m = CriticalManifold::new(pr).unwrap();
    let mut chart = 0.0f64;
    for v in linspace(-0.99, 0.99, 200) {
        for p in linspace(0.0, pr.gate_p.g, 200) {
            let n = m.chart_n(v, p).unwrap();
            chart = chart.max((pr.ionic_current(&FullState::new(v, n, p)) - pr.i).abs());
        }
    }

    let (fl, fh) = m.fold_locus(2000, false).unwrap();
    let mut fold = 0.0f64;
    for s in fl.samples.iter().chain(&fh.samples) {
        fold = fold
            .max((pr.ionic_current(s) - pr.i).abs())
            .max(pr.ionic_current_dv(s).abs());
    }

    let base = defaults();
    let mut det = 0.0f64;
    for v in linspace(-1.5, 1.5, 100) {
        let (i, s) = FullSystem::equilibrium_at(&base, v);
        let p = base.with_current(i);
        let got = det3(&full_jacobian(&s, &p).unwrap());
        let want = -iv_curve(v, &p).1 / (p.eps * p.tau);
        det = det.max((got - want).abs() / want.abs());
    }

    let h = 1e-6;
    let mut jac = 0.0f64;
    for v in linspace(-0.9, 0.9, 7) {
        for p in linspace(0.1, 1.9, 5) {
            let s = FullState::new(v, 2.0, p);
            let j = full_jacobian(&s, &pr).unwrap();
            for k in 0..3 {
                let (mut up, mut down) = (s.to_array(), s.to_array());
                up[k] += h;
                down[k] -= h;
                let fu = full_vector_field(&FullState::from_array(up), &pr).unwrap();
                let fd = full_vector_field(&FullState::from_array(down), &pr).unwrap();
                for r in 0..3 {
                    jac = jac.max(rel_err(j[r][k], (fu[r] - fd[r]) / (2.0 * h)));
                }
            }
            let lin = desing_jacobian(v, p, &pr).unwrap();
            let cols = [
                (
                    desing_vf(v + h, p, &pr).unwrap(),
                    desing_vf(v - h, p, &pr).unwrap(),
                ),
                (
                    desing_vf(v, p + h, &pr).unwrap(),
                    desing_vf(v, p - h, &pr).unwrap(),
                ),
            ];
            for (k, (fu, fd)) in cols.iter().enumerate() {
                for r in 0..2 {
                    jac = jac.max(rel_err(lin.jacobian[r][k], (fu[r] - fd[r]) / (2.0 * h)));
                }
            }
        }
    }
    Outcome::new(
        chart < 1e-12 && fold < 1e-12 && det < 1e-8 && jac < 1e-6,
        format!(
            "chart residual {chart:.1e}, fold residual {fold:.1e}, det J rel err {det:.1e}, \
             Jacobian vs FD rel err {jac:.1e}"
        ),
    )
}

fn resample(path: &[[f64; 2]], count: usize) -> Vec<[f64; 2]> {
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        let d = (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]);
        cum.push(cum.last().unwrap() + d);
    }
    let total = *cum.last().unwrap();
    let mut seg = 0;
    (0..count)
        .map(|k| {
            let s = total * k as f64 / (count - 1) as f64;
            while seg + 2 < cum.len() && cum[seg + 1] < s {
                seg += 1;
            }
            let span = cum[seg + 1] - cum[seg];
            let w = if span > 0.0 {
                ((s - cum[seg]) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (a, b) = (path[seg], path[seg + 1]);
            [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
        })
        .collect()
}

fn discrete_frechet(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let d = |x: [f64; 2], y: [f64; 2]| (x[0] - y[0]).hypot(x[1] - y[1]);
    let mut prev = vec![0.0f64; b.len()];
    let mut cur = vec![0.0f64; b.len()];
    for i in 0..a.len() {
        for j in 0..b.len() {
            let here = d(a[i], b[j]);
            cur[j] = match (i, j) {
                (0, 0) => here,
                (0, _) => cur[j - 1].max(here),
                (_, 0) => prev[0].max(here),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(here),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len() - 1]
}

fn reduced_equivalence() -> Outcome {
    let pr = defaults().with_current(-0.55);
    let m = CriticalManifold::new(pr).unwrap();
    let settings = IntegrationSettings::default()
        .with_tolerances(1e-11, 1e-13)
        .with_h_max(1e-3);
    let mut starts = Vec::new();
    for &v in &[-0.85, -0.75, -0.65, 0.1, 0.3, 0.5, 0.7] {
        for k in 0..8 {
            let p = 0.2 + 0.2 * k as f64;
            let Ok(cp) = m.point(v, p) else { continue };
            if cp.branch.is_stable() && m.dv_ionic(v, cp.n, p) > 0.3 {
                starts.push((v, p));
            }
        }
    }
    starts.truncate(20);
    let mut worst = 0.0f64;
    for &(v0, p0) in &starts {
        let near_fold = |x: &[f64; 2]| {
            m.chart_n(x[0], x[1])
                .map(|n| m.dv_ionic(x[0], n, x[1]))
                .unwrap_or(f64::NAN)
                - 0.1
        };
        let reduced = |_: f64, x: &[f64; 2]| reduced_vf(x[0], x[1], &pr).unwrap_or([f64::NAN; 2]);
        let stop = EventSpec::new(Direction::Falling, near_fold);
        let slow = match integrate_to_event(reduced, [v0, p0], stop, &settings.with_t_max(3.0)) {
            Ok((_, _, traj)) => traj,
            Err(_) => integrate(reduced, [v0, p0], &settings.with_t_max(3.0)).unwrap(),
        };
        let t_end = *slow.t.last().unwrap();
        let desing = |_: f64, x: &[f64; 3]| {
            let f = desing_vf(x[0], x[1], &pr).unwrap_or([f64::NAN; 2]);
            let d = m
                .chart_n(x[0], x[1])
                .map(|n| m.dv_ionic(x[0], n, x[1]))
                .unwrap_or(f64::NAN);
            [f[0], f[1], d]
        };
        let clock = EventSpec::new(Direction::Rising, move |x: &[f64; 3]| x[2] - t_end);
        let (_, _, fast) =
            integrate_to_event(desing, [v0, p0, 0.0], clock, &settings.with_t_max(100.0)).unwrap();
        let b: Vec<[f64; 2]> = fast.x.iter().map(|x| [x[0], x[1]]).collect();
        worst = worst.max(discrete_frechet(
            &resample(&slow.x, 1000),
            &resample(&b, 1000),
        ));
    }

    let mut reversed = 0;
    for k in 0..400 {
        let v = -0.45 + 0.45 * k as f64 / 400.0;
        let p = 0.05 + 1.9 * ((k * 37) % 400) as f64 / 400.0;
        let Ok(cp) = m.point(v, p) else { continue };
        let d = m.dv_ionic(v, cp.n, p);
        if cp.branch != Branch::M || d > -1e-3 {
            continue;
        }
        let r = reduced_vf(v, p, &pr).unwrap();
        let s = desing_vf(v, p, &pr).unwrap();
        if r[1] != 0.0 && s[1].signum() == -r[1].signum() && s[0].signum() == -r[0].signum() {
            reversed += 1;
        }
        if reversed == 50 {
            break;
        }
    }
    Outcome::new(
        starts.len() == 20 && worst < 1e-6 && reversed == 50,
        format!(
            "{} stable-branch paths, max Frechet distance {worst:.1e}; \
             time reversal on M at {reversed}/50 points",
            starts.len()
        ),
    )
}

fn phase_portrait() -> Outcome {
    let h = singular();
    let i = h.bistable_midpoint();
    let flow = SlowFlow::new(defaults().with_current(i)).unwrap();
    let eqs = flow.equilibria();
    let classes: Vec<_> = eqs.iter().map(|e| e.class).collect();
    let folded: Vec<_> = flow
        .folded_singularities()
        .iter()
        .filter(|f| f.physical)
        .collect();
    let pass = classes
        == [
            ReducedClass::StableNode,
            ReducedClass::Saddle,
            ReducedClass::Saddle,
        ]
        && folded.len() == 1
        && folded[0].kind == FoldedType::Focus
        && folded[0].fold == Branch::Fl;
    Outcome::new(
        pass,
        format!(
            "i = {i:.6}: equilibria {:?}; folded singularities {:?}",
            eqs.iter().map(|e| e.class.label()).collect::<Vec<_>>(),
            folded
                .iter()
                .map(|f| format!("{} on {}", f.kind.label(), f.fold.label()))
                .collect::<Vec<_>>()
        ),
    )
}

/// Voltage range over `[transient, transient + window]`.
fn terminal_amplitude(pr: &ModelParams, x0: FullState, transient: f64, window: f64) -> f64 {
    let sys = FullSystem::new(*pr).unwrap();
    let field = |_: f64, x: &[f64; 3]| sys.field(x);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    Integrator::new(
        field,
        IntegrationSettings::default()
            .with_h_max(0.1)
            .with_t_max(transient + window),
    )
    .record(Record::Endpoints)
    .run(0.0, x0.to_array(), &[], &mut |t, x, _| {
        if t >= transient {
            lo = lo.min(x[0]);
            hi = hi.max(x[0]);
        }
        Control::Continue
    })
    .unwrap();
    hi - lo
}

fn bistability() -> Outcome {
    let h = singular();
    let (lo, hi) = h.bistable_interval();
    let mid = h.bistable_midpoint();
    let pr = defaults().with_current(mid);
    let verdict = classify_stability(&pr).unwrap().verdict;
    let mut x0 = stable_equilibria(&pr)[0];
    x0.v += 1e-3;
    let rest = terminal_amplitude(&pr, x0, 250.0, 50.0);
    let spike = terminal_amplitude(&pr, singular_cycle_seed(&pr).unwrap(), 250.0, 50.0);
    Outcome::new(
        lo < hi && verdict == Verdict::Bistable && rest < 1e-4 && spike > 0.5,
        format!(
            "bistable interval [{lo:.6}, {hi:.6}], midpoint verdict {}; \
             amplitudes at eps = 0.05: rest {rest:.1e}, spiking {spike:.3}",
            verdict.label()
        ),
    )
}

fn poincare_map() -> Outcome {
    let mid = singular().bistable_midpoint();
    let flow = SlowFlow::new(defaults().with_current(mid)).unwrap();
    let map = flow.poincare_map().unwrap();
    let (lo, hi) = map.interval();
    let mut inside = 0;
    for p in linspace(lo, hi, 10) {
        if let Ok(img) = map.apply(p) {
            if img.p >= lo - 1e-9 && img.p <= hi + 1e-9 {
                inside += 1;
            }
        }
    }
    let fp = map.fixed_point().unwrap();
    Outcome::new(
        inside == 10 && fp.residual.abs() < 1e-10 && fp.multiplier.abs() < 1.0,
        format!(
            "I_l = [{lo:.6}, {hi}], {inside}/10 samples map into I_l; p* = {:.6}, \
             |Pi(p*) - p*| = {:.1e}, Pi'(p*) = {:.4}",
            fp.p_star,
            fp.residual.abs(),
            fp.multiplier
        ),
    )
}

fn cycle_max_p(mid: f64, eps: f64, seed: FullState) -> Option<f64> {
    let pr = defaults().with_current(mid).with_eps(eps);
    let settings = CycleSettings::new(&pr).unwrap();
    match cycle_at(&pr, seed, &settings).unwrap() {
        CycleOutcome::Cycle(c) => Some(c.p_max),
        _ => None,
    }
}

fn convergence() -> Outcome {
    let mid = singular().bistable_midpoint();
    let pr = defaults().with_current(mid);
    let flow = SlowFlow::new(pr).unwrap();
    let p_star = flow.poincare_map().unwrap().fixed_point().unwrap().p_star;
    let seed = singular_cycle_seed(&pr).unwrap();
    let err = |eps: f64| cycle_max_p(mid, eps, seed).map(|p| (p - p_star).abs());
    let (e01, e005, e02) = (err(0.01), err(0.005), err(0.02));
    let pass = match (e01, e005, e02) {
        (Some(a), Some(b), Some(c)) => a / p_star < 0.05 && b < c,
        _ => false,
    };
    Outcome::new(
        pass,
        format!(
            "p* = {p_star:.5}; |max p - p*| at eps 0.01: {}, 0.005: {}, 0.02: {}",
            fmt_opt(e01),
            fmt_opt(e005),
            fmt_opt(e02)
        ),
    )
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("no cycle".into(), |x| format!("{x:.4}"))
}

fn homoclinic_boundary() -> Outcome {
    let h = singular();
    let verdict = |i: f64| classify_stability(&defaults().with_current(i)).map(|r| r.verdict);
    let below = verdict(h.i_h - 1e-6);
    let above = verdict(h.i_h + 1e-6);
    let grid = linspace(h.range.i_c + 1e-3, h.range.i_upper - 1e-3, 41);
    // the classifier needs x_1, which is missing just above i_c where the
    // unstable manifold of x_m ends in the folded node
    let defined: Vec<(f64, Verdict)> = grid
        .iter()
        .filter_map(|&i| verdict(i).ok().map(|v| (i, v)))
        .collect();
    let undefined_low = grid.iter().take_while(|&&i| verdict(i).is_err()).count();
    let flips: Vec<f64> = defined
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| 0.5 * (w[0].0 + w[1].0))
        .collect();
    let flip_brackets_i_h = defined
        .windows(2)
        .any(|w| w[0].1 != w[1].1 && w[0].0 < h.i_h && h.i_h < w[1].0);
    let xm = SlowFlow::new(defaults().with_current(h.i_h))
        .and_then(|f| f.middle_saddle())
        .map(|e| e.branch);
    let pass = h.residual.abs() < 1e-8
        && h.dd_di.abs() > 1e-4
        && below == Ok(Verdict::Monostable)
        && above == Ok(Verdict::Bistable)
        && flips.len() == 1
        && flip_brackets_i_h
        && undefined_low + defined.len() == grid.len()
        && xm == Ok(Branch::Sl)
        && h.range.i_c < h.i_h;
    Outcome::new(
        pass,
        format!(
            "i_H = {:.10}, |D(i_H)| = {:.1e}, dD/di = {:.4}; verdict {:?} below / {:?} above; \
             {} flip(s) over {} classified currents of a 41-point sweep ({} just above i_c \
             without landmarks); x_m on {:?} at i_H (i_c = {:.5})",
            h.i_h,
            h.residual.abs(),
            h.dd_di,
            below.map(|v| v.label()),
            above.map(|v| v.label()),
            flips.len(),
            defined.len(),
            undefined_low,
            xm.map(|b| b.label()),
            h.range.i_c
        ),
    )
}

fn bifurcation_diagram() -> Outcome {
    let pr = defaults();
    let h = singular();
    let branch = equilibrium_branch(&linspace(-1.5, 1.5, 3001), &pr).unwrap();
    let events = detect_equilibrium_bifurcations(&branch, &pr);
    let sn: Vec<_> = events
        .iter()
        .filter(|e| e.kind == BifurcationKind::SaddleNode)
        .collect();
    // S-shape: the fold at lower voltage sits at the higher current
    let s_shaped = sn.len() == 2 && sn[0].v < sn[1].v && sn[0].i > sn[1].i;

    let seed = singular_cycle_seed(&pr.with_current(h.bistable_midpoint())).unwrap();
    let grid = descending_grid(-0.8, -0.4, 40);
    let mut ends = Vec::new();
    let mut coexist = (0, 0);
    let mut max_period = 0.0f64;
    let mut end_labels = Vec::new();
    for eps in [0.05, 0.02, 0.01] {
        let p = pr.with_eps(eps);
        let family = sweep_cycles(&p, &grid, seed, &CycleSettings::new(&p).unwrap()).unwrap();
        if eps == 0.05 {
            for c in family
                .points
                .iter()
                .filter(|c| c.i > h.i_h && c.i < h.range.i_upper)
            {
                coexist.1 += 1;
                if c.stable && !stable_equilibria(&p.with_current(c.i)).is_empty() {
                    coexist.0 += 1;
                }
            }
        }
        if let Some(c) = family.last {
            max_period = max_period.max(c.period);
        }
        end_labels.push(family.end.label());
        ends.push((eps, family.end));
    }
    let capped = ends
        .iter()
        .all(|(_, e)| matches!(e, FamilyEnd::PeriodCap { .. }));
    let dist: Vec<f64> = ends
        .iter()
        .map(|(_, e)| e.boundary().map_or(f64::INFINITY, |b| (b - h.i_h).abs()))
        .collect();
    let monotone = dist.windows(2).all(|w| w[1] < w[0]) && dist[2].is_finite();
    let coexists = coexist.1 >= 10 && coexist.0 == coexist.1;
    let others = s_shaped && coexists && monotone;
    Outcome {
        pass: others && capped,
        detail: format!(
            "{} saddle-node events (S-shaped: {s_shaped}); stable cycle + stable rest at {}/{} \
             grid currents in (i_H, i_upper); |i_H(eps) - i_H| for eps 0.05, 0.02, 0.01 = \
             {:.4}, {:.4}, {:.4} (monotone: {monotone}); family ends {:?} with the largest \
             period {max_period:.1}, short of the cap 1e4 (period-cap clause {})",
            sn.len(),
            coexist.0,
            coexist.1,
            dist[0],
            dist[1],
            dist[2],
            end_labels,
            if capped { "met" } else { "not met" }
        ),
        known_gap: others && !capped,
    }
}

fn run_cli(cmd: &str, out: &Path, threads: Option<&str>) -> bool {
    let mut c = Command::new(env!("CARGO_BIN_EXE_restspike"));
    c.arg(cmd).arg("--out").arg(out);
    if let Some(t) = threads {
        c.env("RESTSPIKE_THREADS", t);
    } else {
        c.env_remove("RESTSPIKE_THREADS");
    }
    c.output().is_ok_and(|o| o.status.success())
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for cmd in ["simulate", "manifold", "reduced", "bistability", "bifdiag"] {
        let (a, b) = (
            tmp.path().join(format!("{cmd}_a")),
            tmp.path().join(format!("{cmd}_b")),
        );
        // the second run is single-threaded, so the outputs cannot depend on scheduling
        let ran = run_cli(cmd, &a, None) && run_cli(cmd, &b, Some("1"));
        let same = ran && {
            let (sa, sb) = (snapshot(&a), snapshot(&b));
            !sa.is_empty() && sa == sb
        };
        pass &= same;
        details.push(format!(
            "{cmd} {}",
            if same { "identical" } else { "DIFFERS" }
        ));
    }
    Outcome::new(pass, details.join(", "))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Duration, fn() -> Outcome); 9] = [
        (
            1,
            "algebraic geometry",
            Duration::from_secs(1),
            algebraic_geometry,
        ),
        (
            2,
            "reduced/desingularized equivalence",
            Duration::from_secs(10),
            reduced_equivalence,
        ),
        (3, "phase portrait", Duration::from_secs(30), phase_portrait),
        (4, "bistability", Duration::from_secs(120), bistability),
        (
            5,
            "singular Poincare map",
            Duration::from_secs(60),
            poincare_map,
        ),
        (
            6,
            "singular-to-perturbed convergence",
            Duration::from_secs(300),
            convergence,
        ),
        (
            7,
            "homoclinic boundary",
            Duration::from_secs(300),
            homoclinic_boundary,
        ),
        (
            8,
            "bifurcation diagram",
            Duration::from_secs(600),
            bifurcation_diagram,
        ),
        (9, "determinism", Duration::from_secs(600), determinism),
    ];
    let mut unexpected = 0;
    for (n, name, budget, check) in criteria {
        let start = Instant::now();
        let mut o = check();
        let elapsed = start.elapsed();
        if elapsed > budget {
            o.pass = false;
            o.known_gap = false;
            o.detail.push_str(&format!("; over the {budget:?} budget"));
        }
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} {verdict}: {name} ({:.2}s): {}",
            elapsed.as_secs_f64(),
            o.detail
        );
        if !o.pass && !(o.known_gap && KNOWN_GAPS.contains(&n)) {
            unexpected += 1;
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criterion failure(s) outside the known gaps");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
