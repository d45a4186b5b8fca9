//! Run configuration: a flat JSON object whose keys name the model
//! parameters and the analysis settings. Missing keys take the defaults
//! below; unknown keys are rejected.

use std::path::{Path, PathBuf};

use restspike_core::bifurcation::CycleSettings;
use restspike_core::ode::IntegrationSettings;
use restspike_core::{GateParams, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub eps: f64,
    pub tau: f64,
    pub g_l: f64,
    pub v_l: f64,
    pub g_m: f64,
    pub a_m: f64,
    pub b_m: f64,
    pub g_n: f64,
    pub a_n: f64,
    pub b_n: f64,
    pub g_p: f64,
    pub a_p: f64,
    pub b_p: f64,
    /// Applied current. When absent, the midpoint of the bistable interval.
    pub i: Option<f64>,

    /// Simulation horizon.
    pub t_end: f64,
    /// Output stride of simulated trajectories.
    pub dt_out: f64,
    /// Initial states `[v, n, p]`. When absent, a point next to the resting
    /// state and a point of the singular relaxation cycle.
    pub x0: Option<Vec<[f64; 3]>>,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_max: f64,

    /// Critical-manifold grid: voltage window and sample counts.
    pub grid_v_lo: f64,
    pub grid_v_hi: f64,
    pub grid_v: usize,
    pub grid_p: usize,
    /// Samples per fold line.
    pub fold_samples: usize,

    /// Current range and number of steps for the sweeps.
    pub i_lo: f64,
    pub i_hi: f64,
    pub steps: usize,

    /// Voltage window and samples of the equilibrium branch.
    pub branch_v_lo: f64,
    pub branch_v_hi: f64,
    pub branch_samples: usize,
    /// Time-scale ratios at which the end of the cycle family is estimated.
    pub eps_list: Vec<f64>,
    pub transient: f64,
    pub period_cap: f64,
    pub refine_tol: f64,

    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelParams::default();
        Self {
            eps: m.eps,
            tau: m.tau,
            g_l: m.g_l,
            v_l: m.v_l,
            g_m: m.gate_m.g,
            a_m: m.gate_m.a,
            b_m: m.gate_m.b,
            g_n: m.gate_n.g,
            a_n: m.gate_n.a,
            b_n: m.gate_n.b,
            g_p: m.gate_p.g,
            a_p: m.gate_p.a,
            b_p: m.gate_p.b,
            i: None,
            t_end: 300.0,
            dt_out: 0.01,
            x0: None,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            h_max: 0.1,
            grid_v_lo: -1.5,
            grid_v_hi: 1.0,
            grid_v: 200,
            grid_p: 200,
            fold_samples: 400,
            i_lo: -0.8,
            i_hi: -0.4,
            steps: 40,
            branch_v_lo: -1.5,
            branch_v_hi: 1.5,
            branch_samples: 3001,
            eps_list: vec![0.05, 0.02, 0.01],
            transient: 200.0,
            period_cap: 1e4,
            refine_tol: 1e-6,
            out: PathBuf::from("out"),
        }
    }
}

fn check(ok: bool, msg: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Model parameters at the configured current (zero when unset).
    pub fn params(&self) -> ModelParams {
        ModelParams {
            eps: self.eps,
            tau: self.tau,
            g_l: self.g_l,
            v_l: self.v_l,
            gate_m: GateParams::new(self.g_m, self.a_m, self.b_m),
            gate_n: GateParams::new(self.g_n, self.a_n, self.b_n),
            gate_p: GateParams::new(self.g_p, self.a_p, self.b_p),
            i: self.i.unwrap_or(0.0),
        }
    }

    pub fn integration(&self) -> IntegrationSettings {
        IntegrationSettings::default()
            .with_tolerances(self.rel_tol, self.abs_tol)
            .with_h_max(self.h_max)
    }

    pub fn cycle_settings(&self, params: &ModelParams) -> Result<CycleSettings, CliError> {
        let mut s = CycleSettings::new(params)?;
        s.transient = self.transient;
        s.period_cap = self.period_cap;
        s.refine_tol = self.refine_tol;
        s.integration = self.integration();
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        // the full system is integrated by several commands
        check(self.eps > 0.0, "eps must be > 0")?;
        self.params()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        check(
            self.eps_list.iter().all(|&e| e > 0.0 && e.is_finite()),
            "eps_list entries must be finite and > 0",
        )?;
        check(self.t_end > 0.0, "t_end must be > 0")?;
        check(
            self.dt_out > 0.0 && self.dt_out <= self.t_end,
            "dt_out must lie in (0, t_end]",
        )?;
        check(
            self.rel_tol > 0.0 && self.abs_tol > 0.0,
            "tolerances must be > 0",
        )?;
        check(self.h_max > 0.0, "h_max must be > 0")?;
        self.integration()
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(x0) = &self.x0 {
            check(!x0.is_empty(), "x0 must not be empty")?;
            check(
                x0.iter().flatten().all(|x| x.is_finite()),
                "x0 entries must be finite",
            )?;
        }
        check(
            self.grid_v_lo < self.grid_v_hi && self.grid_v >= 2 && self.grid_p >= 2,
            "manifold grid must be nonempty",
        )?;
        check(self.fold_samples >= 2, "fold_samples must be >= 2")?;
        check(
            self.branch_v_lo < self.branch_v_hi && self.branch_samples >= 2,
            "equilibrium branch window must be nonempty",
        )?;
        check(
            self.transient >= 0.0 && self.period_cap > 0.0 && self.refine_tol > 0.0,
            "cycle settings must be positive",
        )?;
        Ok(())
    }

    /// Applies command-line overrides of the current range.
    pub fn with_range(
        mut self,
        i_lo: Option<f64>,
        i_hi: Option<f64>,
        steps: Option<usize>,
    ) -> Result<Self, CliError> {
        self.i_lo = i_lo.unwrap_or(self.i_lo);
        self.i_hi = i_hi.unwrap_or(self.i_hi);
        self.steps = steps.unwrap_or(self.steps);
        check(
            self.i_lo.is_finite() && self.i_hi.is_finite() && self.i_lo < self.i_hi,
            "empty current range: need i_lo < i_hi",
        )?;
        check(self.steps > 0, "empty current range: need steps > 0")?;
        Ok(self)
    }
}
