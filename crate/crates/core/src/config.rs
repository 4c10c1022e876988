//! Run configuration: one JSON document, every field defaulted, validated
//! against the module preconditions before any computation starts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, rename_all = "camelCase")]
pub struct RunConfig {
    // spacetime
    pub lambda: f64,
    pub mass: f64,
    pub a: f64,
    pub field_mass: f64,
    pub n: i32,
    // grid
    pub nx: usize,
    pub ntheta: usize,
    pub x_span: f64,
    pub dt: f64,
    pub t_final: f64,
    pub q_count: usize,
    // weights and cutoffs
    pub weight_eps: f64,
    pub cutoff_eps: Option<f64>,
    pub cutoff_scale: Option<f64>,
    // fixtures
    pub fixture: String,
    pub fixture_center: f64,
    pub fixture_width: f64,
    pub fixture_omega: Option<f64>,
    // monitors
    pub ell_values: Option<Vec<f64>>,
    // scattering
    pub side: String,
    pub comparison: String,
    pub schedule: Vec<f64>,
    // resonance scan
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_count: usize,
    pub delta_list: Vec<f64>,
    // reproducibility
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: 0.03,
            mass: 1.0,
            a: 0.1,
            field_mass: 0.0,
            n: 1,
            nx: 64,
            ntheta: 8,
            x_span: 40.0,
            dt: 0.05,
            t_final: 20.0,
            q_count: 3,
            weight_eps: 0.5,
            cutoff_eps: None,
            cutoff_scale: None,
            fixture: "gaussian".to_string(),
            fixture_center: 0.0,
            fixture_width: 2.0,
            fixture_omega: None,
            ell_values: None,
            side: "left".to_string(),
            comparison: "profile".to_string(),
            schedule: vec![4.0, 8.0, 12.0],
            lambda_min: -3.0,
            lambda_max: 3.0,
            lambda_count: 25,
            delta_list: vec![0.5, 0.2, 0.1, 0.05],
            seed: 7,
        }
    }
}

impl RunConfig {
    pub fn load(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        Ok(cfg)
    }

    /// Check every numeric field against the preconditions of the modules it
    /// feeds, before building anything.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ConfigInvalid(m.to_string()));
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad("lambda must be positive");
        }
        if !(self.mass > 0.0) {
            return bad("mass must be positive");
        }
        if self.a < 0.0 || !self.a.is_finite() {
            return bad("a must be nonnegative");
        }
        if self.field_mass < 0.0 {
            return bad("fieldMass must be nonnegative");
        }
        if self.nx < 16 {
            return bad("nx must be at least 16");
        }
        if self.ntheta < 4 {
            return bad("ntheta must be at least 4");
        }
        if !(self.x_span > 0.0) {
            return bad("xSpan must be positive");
        }
        if !(self.dt > 0.0) || !(self.t_final > 0.0) {
            return bad("dt and tFinal must be positive");
        }
        if self.q_count == 0 {
            return bad("qCount must be positive");
        }
        if !(self.weight_eps > 0.0) {
            return bad("weightEps must be positive");
        }
        if let Some(e) = self.cutoff_eps {
            if !(e > 0.0 && e < self.x_span) {
                return bad("cutoffEps must lie in (0, xSpan)");
            }
        }
        if let Some(r) = self.cutoff_scale {
            if !(r > 0.0 && r < self.x_span) {
                return bad("cutoffScale must lie in (0, xSpan)");
            }
        }
        if !(self.fixture_width > 0.0) {
            return bad("fixtureWidth must be positive");
        }
        match self.fixture.as_str() {
            "gaussian" | "ergo-bump" | "ingoing-packet" | "random-window" => {}
            _ => {
                return bad("fixture must be gaussian, ergo-bump, ingoing-packet, or random-window")
            }
        }
        match self.side.as_str() {
            "left" | "right" => {}
            _ => return bad("side must be left or right"),
        }
        match self.comparison.as_str() {
            "profile" | "separable" => {}
            _ => return bad("comparison must be profile or separable"),
        }
        if self.schedule.is_empty()
            || self.schedule.windows(2).any(|w| w[1] <= w[0])
            || self.schedule.iter().any(|&t| !(t > 0.0))
        {
            return bad("schedule must be a strictly increasing list of positive times");
        }
        if self.lambda_count < 2 || !(self.lambda_max > self.lambda_min) {
            return bad("lambda grid must have at least 2 points and positive width");
        }
        if self.delta_list.is_empty()
            || self.delta_list.iter().any(|&d| !(d > 0.0))
            || self.delta_list.windows(2).any(|w| w[1] >= w[0])
        {
            return bad("deltaList must be a strictly decreasing list of positive offsets");
        }
        Ok(())
    }
}
