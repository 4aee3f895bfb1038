use fas_aircomp::channel::assemble_factors;
use fas_aircomp::harness::{check_model_equivalence, solve_eas, solve_fpa, solve_proposed_from, Solution};
use fas_aircomp::model::{sample_channel, trial_rng, AntennaLayout, SystemConfig};
use fas_aircomp::position_opt::{build_surrogate, PositionGrid};
use serde::{Deserialize, Serialize};

/// Knobs exposed on the page. Anything omitted keeps the reference scenario.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoParams {
    pub num_users: usize,
    pub num_subcarriers: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub trial: u64,
    /// Lattice step in wavelengths.
    pub grid_step_wavelengths: f64,
    /// Instances for the model check.
    pub instances: usize,
}

impl Default for DemoParams {
    fn default() -> Self {
        let cfg = SystemConfig::default();
        Self {
            num_users: cfg.num_users,
            num_subcarriers: cfg.num_subcarriers,
            snr_db: 10.0,
            seed: 0,
            trial: 0,
            grid_step_wavelengths: cfg.grid_step / cfg.wavelength,
            instances: 5,
        }
    }
}

impl DemoParams {
    pub fn config(&self) -> Result<SystemConfig, String> {
        let base = SystemConfig::default();
        let cfg = SystemConfig {
            num_users: self.num_users,
            num_subcarriers: self.num_subcarriers,
            max_delay: base.max_delay.min(self.num_subcarriers.saturating_sub(1)),
            power_budget: 10f64.powf(self.snr_db / 10.0),
            noise_power: 1.0,
            grid_step: self.grid_step_wavelengths * base.wavelength,
            rng_seed: self.seed,
            ..base
        };
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

pub fn parse_params(json: &str) -> Result<DemoParams, String> {
    if json.trim().is_empty() {
        return Ok(DemoParams::default());
    }
    serde_json::from_str(json).map_err(|e| format!("bad parameters: {e}"))
}

pub fn to_json<T: Serialize>(value: T) -> Result<String, String> {
    serde_json::to_string(&value).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct SchemeResult {
    pub scheme: &'static str,
    pub mse: f64,
    pub iterations: usize,
    /// `[x, y]` in meters.
    pub positions: Vec<[f64; 2]>,
    pub trace: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct TrialReport {
    pub wavelength: f64,
    pub region: [f64; 4],
    pub min_spacing: f64,
    pub schemes: Vec<SchemeResult>,
}

fn positions(layout: &AntennaLayout) -> Vec<[f64; 2]> {
    layout.positions().iter().map(|p| [p.x, p.y]).collect()
}

fn scheme_result(scheme: &'static str, sol: &Solution) -> SchemeResult {
    SchemeResult {
        scheme,
        mse: sol.mse,
        iterations: sol.iterations,
        positions: positions(&sol.layout),
        trace: sol.trace.clone(),
    }
}

fn region(cfg: &SystemConfig) -> [f64; 4] {
    [cfg.region.x_lo, cfg.region.x_hi, cfg.region.y_lo, cfg.region.y_hi]
}

pub fn solve_trial(params: &DemoParams) -> Result<TrialReport, String> {
    let cfg = params.config()?;
    let chan = sample_channel(&cfg, &mut trial_rng(cfg.rng_seed, params.trial));
    let fpa = solve_fpa(&cfg, &chan).map_err(|e| e.to_string())?;
    let proposed = solve_proposed_from(&cfg, &chan, &fpa).map_err(|e| e.to_string())?;
    let eas = solve_eas(&cfg, &chan).map_err(|e| e.to_string())?;
    Ok(TrialReport {
        wavelength: cfg.wavelength,
        region: region(&cfg),
        min_spacing: cfg.min_spacing,
        schemes: vec![
            scheme_result("proposed", &proposed),
            scheme_result("fpa", &fpa),
            scheme_result("eas", &eas.best),
        ],
    })
}

#[derive(Debug, Serialize)]
pub struct SurrogateMap {
    pub region: [f64; 4],
    pub step: f64,
    /// Lattice size along x and y; scores are stored x-major.
    pub nx: usize,
    pub ny: usize,
    /// `-2 Re{η(r)ᴴ φ_m}` for every lattice point, one array per antenna.
    pub scores: Vec<Vec<f64>>,
    pub positions: Vec<[f64; 2]>,
}

pub fn surrogate_map(params: &DemoParams) -> Result<SurrogateMap, String> {
    let cfg = params.config()?;
    let chan = sample_channel(&cfg, &mut trial_rng(cfg.rng_seed, params.trial));
    let fpa = solve_fpa(&cfg, &chan).map_err(|e| e.to_string())?;
    let fc = assemble_factors(&fpa.layout, &chan, cfg.num_subcarriers, cfg.wavelength);
    let coeffs = build_surrogate(&fc, &fpa.state.precoders, cfg.noise_power).map_err(|e| e.to_string())?;
    let grid = PositionGrid::for_config(&cfg, &chan);
    let points = grid.points();
    let first_x = points.first().map_or(0.0, |p| p.x);
    let ny = points.iter().take_while(|p| p.x == first_x).count();
    let nx = points.len() / ny.max(1);
    Ok(SurrogateMap {
        region: region(&cfg),
        step: grid.step(),
        nx,
        ny,
        scores: coeffs.phi.iter().map(|phi| grid.scores(phi)).collect(),
        positions: positions(&fpa.layout),
    })
}

#[derive(Debug, Serialize)]
pub struct ModelCheck {
    pub instances: usize,
    pub cp_len: usize,
    pub max_relative_error: f64,
}

pub fn check_model(params: &DemoParams) -> Result<ModelCheck, String> {
    let cfg = params.config()?;
    let cp_len = cfg.max_delay + 1;
    let mut rng = trial_rng(cfg.rng_seed, params.trial);
    let report = check_model_equivalence(&cfg, cp_len, params.instances.max(1), &mut rng).map_err(|e| e.to_string())?;
    Ok(ModelCheck {
        instances: report.instances,
        cp_len,
        max_relative_error: report.max_relative_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DemoParams {
        DemoParams {
            num_subcarriers: 16,
            ..DemoParams::default()
        }
    }

    #[test]
    fn empty_json_gives_defaults() {
        let p = parse_params("").unwrap();
        assert_eq!(p.num_users, 5);
        assert_eq!(p.snr_db, 10.0);
        assert!(parse_params("{\"bogus\": 1}").is_err());
        assert!(parse_params("{\"num_users\": 3}").unwrap().num_users == 3);
    }

    #[test]
    fn invalid_config_is_reported() {
        let p = DemoParams {
            num_users: 0,
            ..DemoParams::default()
        };
        assert!(solve_trial(&p).unwrap_err().contains("num_users"));
    }

    #[test]
    fn trial_report_shape() {
        let report = solve_trial(&small()).unwrap();
        assert_eq!(report.schemes.len(), 3);
        let mse: Vec<f64> = report.schemes.iter().map(|s| s.mse).collect();
        assert!(mse[0] <= mse[1] + 1e-9);
        for s in &report.schemes {
            assert_eq!(s.positions.len(), 4);
            assert_eq!(s.trace.last().copied(), Some(s.mse));
        }
        let json = to_json(&report).unwrap();
        assert!(json.contains("\"scheme\":\"eas\""));
    }

    #[test]
    fn surrogate_map_covers_lattice() {
        let map = surrogate_map(&small()).unwrap();
        assert_eq!(map.nx, 61);
        assert_eq!(map.ny, 61);
        assert_eq!(map.scores.len(), 4);
        assert!(map
            .scores
            .iter()
            .all(|s| s.len() == 61 * 61 && s.iter().all(|v| v.is_finite())));
    }

    #[test]
    fn model_check_is_exact() {
        let out = check_model(&DemoParams {
            instances: 2,
            ..small()
        })
        .unwrap();
        assert_eq!(out.cp_len, 16);
        assert!(out.max_relative_error < 1e-10);
    }
}
