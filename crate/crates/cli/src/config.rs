use std::fs;
use std::path::Path;

use serde::Deserialize;
use shg_core::ModelParams;

use crate::CliError;

pub const CONFIG_HELP: &str = "\
CONFIG FILE (strict JSON, unknown keys are rejected):
  {
    \"params\": {
      \"drive\":   E,    laser drive amplitude (default 0)
      \"chi\":     χ,    second-order nonlinearity (default 0)
      \"kappa1\":  1,    must be 1: every rate is in units of κ₁
      \"kappa2\":  κ₂,   harmonic-mode decay (default 0.5)
      \"delta1a\": Δ₁ᵃ,  fundamental detuning of cavity a (default 0)
      \"delta1b\": Δ₁ᵇ,  fundamental detuning of cavity b (default 0)
      \"delta2\":  Δ₂,   harmonic detuning, both cavities (default 0)
      \"v1\":      V₁,   fundamental-mode hopping (default 0)
      \"v2\":      V₂    harmonic-mode hopping (default 0)
    },
    \"space\": { \"dims\": [n_a1, n_a2] or [n_a1, n_a2, n_b1, n_b2] }   (optional)
  }
  Without space.dims the cavity count comes from --cavities and quantum
  truncations are chosen automatically.";

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    params: ModelParams,
    #[serde(default)]
    space: Option<SpaceConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceConfig {
    dims: Option<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub params: ModelParams,
    pub dims: Option<Vec<usize>>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        let raw: RawConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        check_kappa1(&raw.params)?;
        raw.params.validate()?;
        let dims = raw.space.and_then(|s| s.dims);
        if let Some(d) = &dims {
            if d.len() != 2 && d.len() != 4 {
                return Err(CliError::Input(format!(
                    "space.dims must list 2 (one cavity) or 4 (two cavities) modes, got {}",
                    d.len()
                )));
            }
        }
        Ok(Self {
            params: raw.params,
            dims,
        })
    }

    /// Cavity count from `space.dims`, else from the flag (default two).
    pub fn two_cavity(&self, cavities: Option<u8>) -> Result<bool, CliError> {
        match (&self.dims, cavities) {
            (Some(d), Some(c)) if (d.len() == 4) != (c == 2) => Err(CliError::Input(format!(
                "--cavities {c} contradicts space.dims of length {}",
                d.len()
            ))),
            (Some(d), _) => Ok(d.len() == 4),
            (None, c) => Ok(c != Some(1)),
        }
    }
}

pub fn check_kappa1(p: &ModelParams) -> Result<(), CliError> {
    if p.kappa1 != 1.0 {
        return Err(CliError::Input(format!(
            "kappa1 = {} but all rates are measured in units of κ₁, so kappa1 must be 1; \
             divide drive, chi, kappa2, the detunings and the hoppings by κ₁ instead \
             (time is then in units of 1/κ₁)",
            p.kappa1
        )));
    }
    Ok(())
}
