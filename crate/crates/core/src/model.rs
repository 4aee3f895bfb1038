//! Scenario configuration and the domain types shared by every other module.
//!
//! Configuration files are TOML documents whose keys are exactly the field
//! names of [`SystemConfig`]. Every key is optional; omitted keys take the
//! reference-scenario defaults (2.4 GHz carrier, K = 5, N = 64, M = 4, L = 4).
//!
//! ```toml
//! schema_version = 1
//! num_users = 5
//! wavelength = 0.125
//! power_budget = 10.0
//! noise_power = 1.0
//! rng_seed = 7
//!
//! [region]
//! x_lo = -0.1875
//! x_hi = 0.1875
//! y_lo = -0.1875
//! y_hi = 0.1875
//! ```

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Config schema version understood by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Relative slack applied to the minimum-spacing test so that lattice points
/// exactly `δ` apart are not rejected because of rounding.
pub const SPACING_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Closed axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub x_lo: f64,
    pub x_hi: f64,
    pub y_lo: f64,
    pub y_hi: f64,
}

impl Region {
    pub fn square(half_width: f64) -> Self {
        Self {
            x_lo: -half_width,
            x_hi: half_width,
            y_lo: -half_width,
            y_hi: half_width,
        }
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.x >= self.x_lo && p.x <= self.x_hi && p.y >= self.y_lo && p.y <= self.y_hi
    }

    pub fn diagonal(&self) -> f64 {
        (self.x_hi - self.x_lo).hypot(self.y_hi - self.y_lo)
    }
}

/// Whether two antennas satisfy the minimum-spacing constraint. The
/// constraint is closed: a distance of exactly `min_spacing` is admissible.
pub fn well_spaced(a: &Position, b: &Position, min_spacing: f64) -> bool {
    a.distance(b) >= min_spacing * (1.0 - SPACING_RTOL)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    pub num_users: usize,
    pub num_subcarriers: usize,
    pub num_antennas: usize,
    pub num_paths: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Minimum inter-antenna distance in meters.
    pub min_spacing: f64,
    pub region: Region,
    /// Linear transmit power limit per user and subcarrier.
    pub power_budget: f64,
    pub noise_power: f64,
    /// Lattice step of the position search, meters.
    pub grid_step: f64,
    pub max_ao_iters: usize,
    pub max_mm_iters: usize,
    pub ao_tol: f64,
    pub mm_tol: f64,
    pub rng_seed: u64,
    /// Largest path delay in samples.
    pub max_delay: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::with_wavelength(0.125)
    }
}

impl SystemConfig {
    fn with_wavelength(wavelength: f64) -> Self {
        Self {
            num_users: 5,
            num_subcarriers: 64,
            num_antennas: 4,
            num_paths: 4,
            wavelength,
            min_spacing: wavelength / 2.0,
            region: Region::square(1.5 * wavelength),
            power_budget: 10.0,
            noise_power: 1.0,
            grid_step: wavelength / 20.0,
            max_ao_iters: 100,
            max_mm_iters: 30,
            ao_tol: 1e-5,
            mm_tol: 1e-6,
            rng_seed: 0,
            max_delay: 15,
        }
    }

    /// Parses and validates a TOML config document.
    pub fn from_toml_str(source: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(source).map_err(|e| Error::Parse {
            what: "config",
            message: e.to_string(),
        })?;
        let cfg = raw.resolve()?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Renders the config as a TOML document accepted by [`Self::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let raw = RawConfig {
            schema_version: Some(SCHEMA_VERSION),
            num_users: Some(self.num_users),
            num_subcarriers: Some(self.num_subcarriers),
            num_antennas: Some(self.num_antennas),
            num_paths: Some(self.num_paths),
            wavelength: Some(self.wavelength),
            min_spacing: Some(self.min_spacing),
            region: Some(self.region),
            power_budget: Some(self.power_budget),
            noise_power: Some(self.noise_power),
            grid_step: Some(self.grid_step),
            max_ao_iters: Some(self.max_ao_iters),
            max_mm_iters: Some(self.max_mm_iters),
            ao_tol: Some(self.ao_tol),
            mm_tol: Some(self.mm_tol),
            rng_seed: Some(self.rng_seed),
            max_delay: Some(self.max_delay),
        };
        toml::to_string(&raw).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        positive_count("num_users", self.num_users)?;
        positive_count("num_subcarriers", self.num_subcarriers)?;
        positive_count("num_antennas", self.num_antennas)?;
        positive_count("num_paths", self.num_paths)?;
        positive_count("max_ao_iters", self.max_ao_iters)?;
        positive_count("max_mm_iters", self.max_mm_iters)?;
        positive_real("wavelength", self.wavelength)?;
        positive_real("power_budget", self.power_budget)?;
        positive_real("noise_power", self.noise_power)?;
        positive_real("grid_step", self.grid_step)?;
        positive_real("ao_tol", self.ao_tol)?;
        positive_real("mm_tol", self.mm_tol)?;
        if !self.min_spacing.is_finite() || self.min_spacing < 0.0 {
            return Err(Error::invalid("min_spacing", "must be finite and non-negative"));
        }
        let r = &self.region;
        if ![r.x_lo, r.x_hi, r.y_lo, r.y_hi].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("region", "bounds must be finite"));
        }
        if r.x_lo > r.x_hi || r.y_lo > r.y_hi {
            return Err(Error::invalid("region", "lower bound exceeds upper bound"));
        }
        if self.max_delay >= self.num_subcarriers {
            return Err(Error::invalid(
                "max_delay",
                format!("must be below num_subcarriers = {}", self.num_subcarriers),
            ));
        }
        if greedy_packing(&self.region, self.grid_step, self.min_spacing, self.num_antennas).is_none() {
            return Err(Error::InfeasibleRegion {
                antennas: self.num_antennas,
                min_spacing: self.min_spacing,
            });
        }
        Ok(())
    }

    /// Linear `P/σ²` ratio.
    pub fn snr(&self) -> f64 {
        self.power_budget / self.noise_power
    }
}

fn positive_count(key: &'static str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::invalid(key, "must be at least 1"));
    }
    Ok(())
}

fn positive_real(key: &'static str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::invalid(key, format!("must be finite and positive, got {v}")));
    }
    Ok(())
}

/// Reads a config file from disk.
pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig> {
    let source = std::fs::read_to_string(path)?;
    SystemConfig::from_toml_str(&source)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: Option<u32>,
    num_users: Option<usize>,
    num_subcarriers: Option<usize>,
    num_antennas: Option<usize>,
    num_paths: Option<usize>,
    wavelength: Option<f64>,
    min_spacing: Option<f64>,
    region: Option<Region>,
    power_budget: Option<f64>,
    noise_power: Option<f64>,
    grid_step: Option<f64>,
    max_ao_iters: Option<usize>,
    max_mm_iters: Option<usize>,
    ao_tol: Option<f64>,
    mm_tol: Option<f64>,
    rng_seed: Option<u64>,
    max_delay: Option<usize>,
}

impl RawConfig {
    fn resolve(self) -> Result<SystemConfig> {
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                return Err(Error::invalid(
                    "schema_version",
                    format!("unsupported version {v}, expected {SCHEMA_VERSION}"),
                ));
            }
        }
        let wavelength = self.wavelength.unwrap_or(0.125);
        positive_real("wavelength", wavelength)?;
        // Geometry defaults scale with the configured wavelength.
        let d = SystemConfig::with_wavelength(wavelength);
        Ok(SystemConfig {
            num_users: self.num_users.unwrap_or(d.num_users),
            num_subcarriers: self.num_subcarriers.unwrap_or(d.num_subcarriers),
            num_antennas: self.num_antennas.unwrap_or(d.num_antennas),
            num_paths: self.num_paths.unwrap_or(d.num_paths),
            wavelength,
            min_spacing: self.min_spacing.unwrap_or(d.min_spacing),
            region: self.region.unwrap_or(d.region),
            power_budget: self.power_budget.unwrap_or(d.power_budget),
            noise_power: self.noise_power.unwrap_or(d.noise_power),
            grid_step: self.grid_step.unwrap_or(d.grid_step),
            max_ao_iters: self.max_ao_iters.unwrap_or(d.max_ao_iters),
            max_mm_iters: self.max_mm_iters.unwrap_or(d.max_mm_iters),
            ao_tol: self.ao_tol.unwrap_or(d.ao_tol),
            mm_tol: self.mm_tol.unwrap_or(d.mm_tol),
            rng_seed: self.rng_seed.unwrap_or(d.rng_seed),
            max_delay: self.max_delay.unwrap_or(d.max_delay),
        })
    }
}

/// Lattice `lo, lo + step, ...` covering `[lo, hi]`, clamped to `hi`.
pub(crate) fn axis_lattice(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count).map(move |i| (lo + i as f64 * step).min(hi))
}

/// First-fit placement of `count` points on the `step` lattice over `region`,
/// scanning x-major. Returns `None` when the lattice cannot hold them.
pub fn greedy_packing(region: &Region, step: f64, min_spacing: f64, count: usize) -> Option<AntennaLayout> {
    let mut placed: Vec<Position> = Vec::with_capacity(count);
    'outer: for x in axis_lattice(region.x_lo, region.x_hi, step) {
        for y in axis_lattice(region.y_lo, region.y_hi, step) {
            if placed.len() == count {
                break 'outer;
            }
            let p = Position::new(x, y);
            if placed.iter().all(|q| well_spaced(&p, q, min_spacing)) {
                placed.push(p);
            }
        }
    }
    (placed.len() == count).then(|| AntennaLayout::new(placed))
}

/// Antenna positions `r = [r_1ᵀ, …, r_Mᵀ]ᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    positions: Vec<Position>,
}

impl AntennaLayout {
    pub fn new(positions: Vec<Position>) -> Self {
        Self { positions }
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn get(&self, m: usize) -> Position {
        self.positions[m]
    }

    pub fn set(&mut self, m: usize, p: Position) {
        self.positions[m] = p;
    }

    /// The stacked coordinate vector `[x_1, y_1, …, x_M, y_M]`.
    pub fn stacked(&self) -> Vec<f64> {
        self.positions.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn in_region(&self, region: &Region) -> bool {
        self.positions.iter().all(|p| region.contains(p))
    }

    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.positions.iter().enumerate() {
            for b in &self.positions[i + 1..] {
                best = best.min(a.distance(b));
            }
        }
        best
    }

    pub fn is_well_spaced(&self, min_spacing: f64) -> bool {
        self.positions
            .iter()
            .enumerate()
            .all(|(i, a)| self.positions[i + 1..].iter().all(|b| well_spaced(a, b, min_spacing)))
    }

    pub fn is_feasible(&self, region: &Region, min_spacing: f64) -> bool {
        self.in_region(region) && self.is_well_spaced(min_spacing)
    }
}

/// Multipath parameters of every user: `K × L` arrays indexed `(k, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: DMatrix<C64>,
    /// Integer path delays in samples.
    pub delays: DMatrix<usize>,
    /// Elevation angles θ in `[0, π)`.
    pub elevations: DMatrix<f64>,
    /// Azimuth angles φ in `[0, π)`.
    pub azimuths: DMatrix<f64>,
}

impl ChannelRealization {
    pub fn num_users(&self) -> usize {
        self.gains.nrows()
    }

    pub fn num_paths(&self) -> usize {
        self.gains.ncols()
    }

    pub fn max_delay(&self) -> usize {
        self.delays.iter().copied().max().unwrap_or(0)
    }
}

/// Deterministic RNG for trial `trial` of the run seeded by `seed`. Each trial
/// reads its own ChaCha stream, so trials can run in any order or in parallel.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn uniform_half_open_pi<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let v = rng.random::<f64>() * PI;
    if v < PI {
        v
    } else {
        PI.next_down()
    }
}

/// Draws one channel realization.
///
/// Users are drawn one after another (all paths of user 1, then user 2, ...),
/// so the channel for `K` users is a prefix of the one for `K + 1` users drawn
/// from the same stream.
pub fn sample_channel<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> ChannelRealization {
    let (k_users, l_paths) = (cfg.num_users, cfg.num_paths);
    let mut gains = DMatrix::zeros(k_users, l_paths);
    let mut delays = DMatrix::zeros(k_users, l_paths);
    let mut elevations = DMatrix::zeros(k_users, l_paths);
    let mut azimuths = DMatrix::zeros(k_users, l_paths);
    // CN(0, 1/L): each quadrature has variance 1/(2L).
    let scale = (0.5 / l_paths as f64).sqrt();
    for k in 0..k_users {
        for l in 0..l_paths {
            elevations[(k, l)] = uniform_half_open_pi(rng);
            azimuths[(k, l)] = uniform_half_open_pi(rng);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            gains[(k, l)] = C64::new(re * scale, im * scale);
            delays[(k, l)] = rng.random_range(0..=cfg.max_delay);
        }
    }
    ChannelRealization {
        gains,
        delays,
        elevations,
        azimuths,
    }
}
