//! Run configuration: one TOML file with the sections `geometry`,
//! `constitutive`, `kernel`, `pore`, `effective` and `study`.

use crate::cell_problem::CellMethod;
use crate::constitutive::{energy_function, make_pressure, EnergyFunction, LawKind, PressureLaw};
use crate::geometry::{build_unit_cell, build_unit_cell_with_annulus, Grain, Rect, UnitCell};
use crate::grid::Grid;
use crate::nonlocal::{make_kernel, ConvMethod, Kernel};
use crate::pore::PoreConfig;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub grain: Grain,
    /// Annulus used by the mean-value extension; defaults to a dilated grain.
    pub annulus: Option<Grain>,
    /// Unit-cell resolution (cells per unit length).
    pub m: usize,
    pub omega: Rect,
    /// Strictly decreasing scales.
    pub eps: Vec<f64>,
}

impl Default for GeometrySection {
    fn default() -> Self {
        GeometrySection {
            grain: Grain::centered_disc(0.25),
            annulus: None,
            m: 8,
            omega: Rect::UNIT,
            eps: vec![0.25, 0.125, 0.0625],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstitutiveSection {
    pub law: LawKind,
    pub gamma: f64,
    pub rho_s: f64,
    /// Reference density of the energy gauge; defaults to `rho_s`.
    pub rho_ref: Option<f64>,
    /// Upper end of the working density range; defaults to `10 max rho_0`.
    pub r_max: Option<f64>,
    pub n_samples: usize,
}

impl Default for ConstitutiveSection {
    fn default() -> Self {
        ConstitutiveSection { law: LawKind::TWO_WELL, gamma: 20.0, rho_s: 0.5, rho_ref: None, r_max: None, n_samples: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub delta: f64,
    pub conv: ConvMethod,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { delta: 0.1, conv: ConvMethod::Auto }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffectiveSection {
    /// Inline porosity; otherwise taken from the unit cell.
    pub theta: Option<f64>,
    /// Inline permeability; otherwise read from `cell_csv` or computed.
    pub abar: Option<[[f64; 2]; 2]>,
    /// `abar.csv` written by the `cell` subcommand.
    pub cell_csv: Option<PathBuf>,
    pub t_end: f64,
    pub sigma: f64,
    pub cfl: f64,
    pub fixed_dt: Option<f64>,
    pub allow_unit_theta: bool,
    pub max_steps: usize,
}

impl Default for EffectiveSection {
    fn default() -> Self {
        let d = crate::effective::EffectiveConfig::default();
        EffectiveSection {
            theta: None,
            abar: None,
            cell_csv: None,
            t_end: d.t_end,
            sigma: d.sigma,
            cfl: d.cfl,
            fixed_dt: None,
            allow_unit_theta: false,
            max_steps: d.max_steps,
        }
    }
}

/// Initial density on the whole domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InitialDatum {
    Constant { value: f64 },
    /// `mean + amp cos(kx pi x) cos(ky pi y)` in domain-relative coordinates.
    Cosine { mean: f64, amp: f64, kx: f64, ky: f64 },
    Gaussian { base: f64, amp: f64, cx: f64, cy: f64, w: f64 },
    /// `mean + U(-amp, amp)` per cell, seeded.
    Noisy { mean: f64, amp: f64, seed: u64 },
}

impl InitialDatum {
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        let (lx, ly) = (grid.nx as f64 * grid.h, grid.ny as f64 * grid.h);
        match *self {
            InitialDatum::Constant { value } => vec![value; grid.len()],
            InitialDatum::Cosine { mean, amp, kx, ky } => grid.sample(|x, y| {
                let (u, v) = ((x - grid.x0) / lx, (y - grid.y0) / ly);
                mean + amp * (kx * std::f64::consts::PI * u).cos() * (ky * std::f64::consts::PI * v).cos()
            }),
            InitialDatum::Gaussian { base, amp, cx, cy, w } => {
                grid.sample(|x, y| base + amp * (-((x - cx).powi(2) + (y - cy).powi(2)) / (w * w)).exp())
            }
            InitialDatum::Noisy { mean, amp, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (0..grid.len()).map(|_| mean + rng.random_range(-amp..=amp)).collect()
            }
        }
    }

    /// Largest value the datum can take.
    pub fn max_value(&self) -> f64 {
        match *self {
            InitialDatum::Constant { value } => value,
            InitialDatum::Cosine { mean, amp, .. } => mean + amp.abs(),
            InitialDatum::Gaussian { base, amp, .. } => base + amp.max(0.0),
            InitialDatum::Noisy { mean, amp, .. } => mean + amp.abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    /// Final time; chosen by an effective-solver dry run when absent.
    pub t_end: Option<f64>,
    /// Relative L2 change the dry run looks for.
    pub dry_run_change: f64,
    /// Dry-run horizon.
    pub dry_run_cap: f64,
    /// Comparison times `t_j = j T / (n_times - 1)`.
    pub n_times: usize,
    /// Defaults to a central bump at the wall density, so the outer wall
    /// exerts no force at `t = 0`.
    pub initial: InitialDatum,
    /// Darcy checks use `rho > rho_floor_factor * max rho_0`.
    pub rho_floor_factor: f64,
    pub cell_method: CellMethod,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            t_end: None,
            dry_run_change: 0.05,
            dry_run_cap: 50.0,
            n_times: 5,
            initial: InitialDatum::Gaussian { base: 0.5, amp: 0.2, cx: 0.5, cy: 0.5, w: 0.12 },
            rho_floor_factor: 1e-3,
            cell_method: CellMethod::Uzawa,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometrySection,
    pub constitutive: ConstitutiveSection,
    pub kernel: KernelSection,
    pub pore: PoreConfig,
    pub effective: EffectiveSection,
    pub study: StudySection,
}

/// Objects built from a validated config.
pub struct Built {
    pub cell: UnitCell,
    pub law: PressureLaw,
    pub energy: EnergyFunction,
    pub kernel: Kernel,
    /// Common grid spacing `eps_min / m`.
    pub h: f64,
    pub grid: Grid,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::parse("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        if g.eps.is_empty() || g.eps.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::config("geometry.eps needs positive entries"));
        }
        if g.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::config("geometry.eps must be strictly decreasing"));
        }
        if self.kernel.delta.is_nan() || self.kernel.delta <= 0.0 {
            return Err(Error::config("kernel.delta must be positive"));
        }
        let c = &self.constitutive;
        if !(c.gamma >= 0.0) || !(c.rho_s > 0.0) {
            return Err(Error::config("constitutive needs gamma >= 0 and rho_s > 0"));
        }
        if c.n_samples < 100 {
            return Err(Error::config("constitutive.n_samples must be at least 100"));
        }
        let s = &self.study;
        if s.n_times < 2 {
            return Err(Error::config("study.n_times must be at least 2"));
        }
        if !(s.rho_floor_factor >= 0.0) || !(s.dry_run_change > 0.0) || !(s.dry_run_cap > 0.0) {
            return Err(Error::config("bad study thresholds"));
        }
        if let Some(t) = s.t_end {
            if !(t > 0.0) {
                return Err(Error::config("study.t_end must be positive"));
            }
        }
        self.pore.validate()
    }

    /// `h = eps_min / m`, so every eps-cell holds a whole multiple of `m` cells.
    pub fn h(&self) -> f64 {
        self.geometry.eps.last().copied().unwrap_or(1.0) / self.geometry.m as f64
    }

    pub fn r_max(&self) -> f64 {
        self.constitutive.r_max.unwrap_or(10.0 * self.study.initial.max_value().max(self.constitutive.rho_s))
    }

    pub fn build(&self) -> Result<Built> {
        let g = &self.geometry;
        let cell = match g.annulus {
            Some(a) => build_unit_cell_with_annulus(g.grain, a, g.m)?,
            None => build_unit_cell(g.grain, g.m)?,
        };
        let c = &self.constitutive;
        let law = make_pressure(c.law, c.gamma, c.rho_s, self.r_max())?;
        let energy = energy_function(&law, c.rho_ref.unwrap_or(c.rho_s))?;
        let h = self.h();
        let kernel = make_kernel(self.kernel.delta, h)?;
        let grid = g.omega.grid(h)?;
        Ok(Built { cell, law, energy, kernel, h, grid })
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML of `section`.
    pub fn section_hash(&self, section: &str) -> String {
        let text = match section {
            "geometry" => toml::to_string(&self.geometry),
            "constitutive" => toml::to_string(&self.constitutive),
            "kernel" => toml::to_string(&self.kernel),
            "pore" => toml::to_string(&self.pore),
            "effective" => toml::to_string(&self.effective),
            "study" => toml::to_string(&self.study),
            _ => Ok(self.to_toml()),
        }
        .expect("section serializes");
        content_hash(text.as_bytes())
    }

    pub fn hash(&self) -> String {
        content_hash(self.to_toml().as_bytes())
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_and_validate() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.hash(), back.hash());
        assert_eq!(cfg.h(), 1.0 / 128.0);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let text = r#"
[geometry]
grain = { kind = "disc", cx = 0.5, cy = 0.5, r = 0.2 }
eps = [0.25, 0.125]

[constitutive]
law = { kind = "polytropic", coef = 1.0, exponent = 2.0 }
gamma = 0.0

[study]
initial = { kind = "gaussian", base = 0.3, amp = 0.2, cx = 0.5, cy = 0.5, w = 0.2 }
"#;
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.geometry.m, 8);
        assert_eq!(cfg.h(), 1.0 / 64.0);
        assert_eq!(cfg.r_max(), 5.0);
        let b = cfg.build().unwrap();
        assert_eq!(b.grid.nx, 64);
        assert!(b.law.spinodal.is_none());
    }

    #[test]
    fn bad_configs_are_config_errors() {
        for text in [
            "[geometry]\neps = [0.125, 0.25]\n",
            "[geometry]\nbogus = 1\n",
            "[study]\nn_times = 1\n",
            "[pore]\nmu = -1.0\n",
            "not toml at all [",
        ] {
            let e = RunConfig::parse(text).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{text}: {e}");
        }
    }

    #[test]
    fn hash_changes_with_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.kernel.delta = 0.11;
        assert_ne!(a.hash(), b.hash());
        assert_ne!(a.section_hash("kernel"), b.section_hash("kernel"));
        assert_eq!(a.section_hash("pore"), b.section_hash("pore"));
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn noisy_datum_is_seeded() {
        let g = Grid::unit(8);
        let d = InitialDatum::Noisy { mean: 0.5, amp: 0.1, seed: 4 };
        assert_eq!(d.sample(&g), d.sample(&g));
        assert_ne!(d.sample(&g), InitialDatum::Noisy { mean: 0.5, amp: 0.1, seed: 5 }.sample(&g));
        assert!(d.sample(&g).iter().all(|v| (0.4..=0.6).contains(v)));
    }
}
