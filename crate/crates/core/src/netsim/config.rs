//! Scenario configuration.
//!
//! Flat UTF-8 `key = value` text. Blank lines and `#` comments are ignored.
//! Repeated keys `attack` and `maintenance` accumulate; every other key may
//! appear once.
//!
//! ```text
//! n_vehicles = 10
//! n_rsus = 5
//! ecus_per_vehicle = 8
//! n_rounds = 3
//! seed = 42
//! latency_ms = 0
//! attack = ecu_reversal,3,2      # kind,vehicle,round[,ecu]
//! maintenance = 1,1,4            # vehicle,round,ecu
//! ```
//!
//! Rounds are 0-based encounter indices: round `r` is a vehicle's `r`-th
//! RSU encounter. An attack or maintenance at round `r` happens just before
//! that encounter.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::adversary::AttackKind;
use crate::protocol::DEFAULT_SUBSET_SIZE;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttackPlan {
    pub kind: AttackKind,
    pub target: usize,
    pub round: usize,
    /// ECU to hit for the firmware attacks; drawn from the run seed when
    /// absent.
    pub ecu: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaintenancePlan {
    pub vehicle: usize,
    pub round: usize,
    pub ecu: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimConfig {
    pub n_vehicles: usize,
    pub n_rsus: usize,
    pub ecus_per_vehicle: usize,
    /// RSU encounters per vehicle.
    pub n_rounds: usize,
    pub seed: u64,
    pub attacks: Vec<AttackPlan>,
    pub maintenance: Vec<MaintenancePlan>,
    /// One-way delay per protocol message.
    pub latency_ms: u64,
    /// Travel time between consecutive RSUs.
    pub hop_ms: u64,
    pub subset_size: usize,
    /// When set, every challenge includes this ECU.
    pub probe_ecu: Option<usize>,
    /// How many ECUs an EcuReversal attack reverts.
    pub reversal_ecus: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_vehicles: 10,
            n_rsus: 5,
            ecus_per_vehicle: 8,
            n_rounds: 3,
            seed: 1,
            attacks: Vec::new(),
            maintenance: Vec::new(),
            latency_ms: 0,
            hop_ms: 1000,
            subset_size: DEFAULT_SUBSET_SIZE,
            probe_ecu: None,
            reversal_ecus: 1,
        }
    }
}

fn num<T: FromStr>(s: &str, line: usize, what: &str) -> Result<T, ConfigError> {
    s.trim().parse().map_err(|_| ConfigError::Parse {
        line,
        msg: format!("expected an unsigned integer for {what}, got {s:?}"),
    })
}

impl SimConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        text.parse()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (name, v) in [
            ("n_vehicles", self.n_vehicles),
            ("n_rsus", self.n_rsus),
            ("ecus_per_vehicle", self.ecus_per_vehicle),
            ("n_rounds", self.n_rounds),
            ("subset_size", self.subset_size),
            ("reversal_ecus", self.reversal_ecus),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.hop_ms < 4 || self.hop_ms <= 3 * self.latency_ms {
            return bad("hop_ms must be at least 4 and exceed three message latencies".into());
        }
        if self.reversal_ecus > self.ecus_per_vehicle {
            return bad("reversal_ecus exceeds ecus_per_vehicle".into());
        }
        if self.probe_ecu.is_some_and(|p| p >= self.ecus_per_vehicle) {
            return bad("probe_ecu out of range".into());
        }
        for a in &self.attacks {
            if a.target >= self.n_vehicles {
                return bad(format!("attack target {} out of range", a.target));
            }
            if a.round >= self.n_rounds {
                return bad(format!("attack round {} out of range", a.round));
            }
            if a.ecu.is_some_and(|e| e >= self.ecus_per_vehicle) {
                return bad("attack ECU out of range".into());
            }
            if a.kind == AttackKind::Replay && a.round == 0 {
                return bad("replay needs a captured response; use round >= 1".into());
            }
        }
        for m in &self.maintenance {
            if m.vehicle >= self.n_vehicles
                || m.round >= self.n_rounds
                || m.ecu >= self.ecus_per_vehicle
            {
                return bad(format!("maintenance {m:?} out of range"));
            }
        }
        Ok(())
    }

    /// Writes the config back in the text format; `parse(to_text(c)) == c`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "n_vehicles = {}", self.n_vehicles);
        let _ = writeln!(s, "n_rsus = {}", self.n_rsus);
        let _ = writeln!(s, "ecus_per_vehicle = {}", self.ecus_per_vehicle);
        let _ = writeln!(s, "n_rounds = {}", self.n_rounds);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "latency_ms = {}", self.latency_ms);
        let _ = writeln!(s, "hop_ms = {}", self.hop_ms);
        let _ = writeln!(s, "subset_size = {}", self.subset_size);
        let _ = writeln!(s, "reversal_ecus = {}", self.reversal_ecus);
        if let Some(p) = self.probe_ecu {
            let _ = writeln!(s, "probe_ecu = {p}");
        }
        for a in &self.attacks {
            let _ = write!(s, "attack = {},{},{}", a.kind, a.target, a.round);
            if let Some(e) = a.ecu {
                let _ = write!(s, ",{e}");
            }
            s.push('\n');
        }
        for m in &self.maintenance {
            let _ = writeln!(s, "maintenance = {},{},{}", m.vehicle, m.round, m.ecu);
        }
        s
    }
}

impl fmt::Display for SimConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl FromStr for SimConfig {
    type Err = ConfigError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut cfg = SimConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Parse {
                line,
                msg: format!("expected `key = value`, got {content:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if !matches!(key, "attack" | "maintenance") && !seen.insert(key.to_string()) {
                return Err(ConfigError::Parse {
                    line,
                    msg: format!("duplicate key {key}"),
                });
            }
            match key {
                "n_vehicles" => cfg.n_vehicles = num(value, line, key)?,
                "n_rsus" => cfg.n_rsus = num(value, line, key)?,
                "ecus_per_vehicle" => cfg.ecus_per_vehicle = num(value, line, key)?,
                "n_rounds" => cfg.n_rounds = num(value, line, key)?,
                "seed" => cfg.seed = num(value, line, key)?,
                "latency_ms" => cfg.latency_ms = num(value, line, key)?,
                "hop_ms" => cfg.hop_ms = num(value, line, key)?,
                "subset_size" => cfg.subset_size = num(value, line, key)?,
                "probe_ecu" => cfg.probe_ecu = Some(num(value, line, key)?),
                "reversal_ecus" => cfg.reversal_ecus = num(value, line, key)?,
                "attack" => {
                    let parts: Vec<_> = value.split(',').map(str::trim).collect();
                    if !(3..=4).contains(&parts.len()) {
                        return Err(ConfigError::Parse {
                            line,
                            msg: "attack = kind,vehicle,round[,ecu]".into(),
                        });
                    }
                    let kind = parts[0].parse().map_err(|e| ConfigError::Parse {
                        line,
                        msg: format!("{e}"),
                    })?;
                    cfg.attacks.push(AttackPlan {
                        kind,
                        target: num(parts[1], line, "attack vehicle")?,
                        round: num(parts[2], line, "attack round")?,
                        ecu: parts
                            .get(3)
                            .map(|e| num(e, line, "attack ecu"))
                            .transpose()?,
                    });
                }
                "maintenance" => {
                    let parts: Vec<_> = value.split(',').collect();
                    let [v, r, e] = parts.as_slice() else {
                        return Err(ConfigError::Parse {
                            line,
                            msg: "maintenance = vehicle,round,ecu".into(),
                        });
                    };
                    cfg.maintenance.push(MaintenancePlan {
                        vehicle: num(v, line, "maintenance vehicle")?,
                        round: num(r, line, "maintenance round")?,
                        ecu: num(e, line, "maintenance ecu")?,
                    });
                }
                other => {
                    return Err(ConfigError::Parse {
                        line,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
