//! Flat run configuration.
//!
//! Every key is optional; missing keys take the defaults below. Unknown
//! keys and ill-typed or out-of-range values are errors naming the key.

use std::path::{Path, PathBuf};

use hybrid_tube::gait::{DesignOptions, SynthesisOptions, DEFAULT_SHAPE_MARGIN};
use hybrid_tube::normotope::EmbedOptions;
use hybrid_tube::ode::OdeOptions;
use hybrid_tube::verify::VerifyOptions;
use hybrid_tube::walker::WalkerParams;
use hybrid_tube::Error;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // walker
    pub mass: f64,
    pub gravity: f64,
    pub leg_length: f64,
    pub hip_angle: f64,

    // gait synthesis
    pub knots: usize,
    pub knot_step: f64,
    pub clearance: f64,
    pub min_descent: f64,
    pub theta0: f64,
    pub thetadot0: f64,
    /// Closed-loop step-to-step spectrum; one entry must be 0 (the
    /// direction normal to the touchdown surface).
    pub poles: [f64; 4],

    // verification
    pub h_embed: f64,
    pub window_resolution: f64,
    pub shape_margin: f64,
    pub s_tol: f64,

    // simulation
    pub h_sim: f64,
    pub sim_tol: f64,
    pub event_tol: f64,

    // control design
    pub eta: f64,
    pub n_grad: usize,
    pub s_min: f64,
    pub fd_step: f64,
    pub fd_check_step: f64,
    pub fd_rel_tol: f64,
    pub max_rounds: usize,

    // Monte Carlo
    pub n_traj: usize,
    pub n_crossings: usize,
    pub seed: u64,

    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let w = WalkerParams::default();
        let s = SynthesisOptions::default();
        let d = DesignOptions::default();
        let v = VerifyOptions::default();
        Self {
            mass: w.m,
            gravity: w.g,
            leg_length: w.r0,
            hip_angle: w.theta_h,
            knots: s.knots,
            knot_step: s.knot_step,
            clearance: s.clearance,
            min_descent: s.min_descent,
            theta0: s.theta0,
            thetadot0: s.thetadot0,
            poles: [0.0, s.poles[0], s.poles[1], s.poles[2]],
            h_embed: v.embed.h,
            window_resolution: v.window_resolution,
            shape_margin: DEFAULT_SHAPE_MARGIN,
            s_tol: d.s_tol,
            h_sim: 1e-2,
            sim_tol: 1e-10,
            event_tol: 1e-10,
            eta: d.eta,
            n_grad: d.n_grad,
            s_min: d.s_min,
            fd_step: d.fd_step,
            fd_check_step: d.fd_check_step,
            fd_rel_tol: d.fd_rel_tol,
            max_rounds: d.max_rounds,
            n_traj: 100,
            n_crossings: 15,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> Error {
    Error::Config { key: key.to_string(), message: message.into() }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Error> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| bad("<file>", e.message().to_string()))?;
        let defaults = toml::Table::try_from(Self::default()).expect("defaults serialize");
        for (key, value) in &table {
            if !defaults.contains_key(key) {
                return Err(bad(key, "unknown key"));
            }
            // Type-check one key at a time so the error can name it.
            let mut probe = defaults.clone();
            probe.insert(key.clone(), value.clone());
            if let Err(e) = probe.try_into::<Self>() {
                return Err(bad(key, e.message().to_string()));
            }
        }
        let mut merged = defaults;
        merged.extend(table);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| bad("<file>", e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), Error> {
        let positive = [
            ("mass", self.mass),
            ("gravity", self.gravity),
            ("leg_length", self.leg_length),
            ("hip_angle", self.hip_angle),
            ("knot_step", self.knot_step),
            ("min_descent", self.min_descent),
            ("h_embed", self.h_embed),
            ("window_resolution", self.window_resolution),
            ("shape_margin", self.shape_margin),
            ("s_tol", self.s_tol),
            ("h_sim", self.h_sim),
            ("sim_tol", self.sim_tol),
            ("event_tol", self.event_tol),
            ("eta", self.eta),
            ("fd_step", self.fd_step),
            ("fd_check_step", self.fd_check_step),
            ("fd_rel_tol", self.fd_rel_tol),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(bad(key, format!("must be positive and finite, got {v}")));
            }
        }
        for (key, v) in [("knots", self.knots), ("n_grad", self.n_grad), ("max_rounds", self.max_rounds)] {
            if v == 0 {
                return Err(bad(key, "must be at least 1"));
            }
        }
        if !(self.s_min >= 1.0) {
            return Err(bad("s_min", format!("must be at least 1, got {}", self.s_min)));
        }
        if !(self.clearance >= 0.0) {
            return Err(bad("clearance", "must be non-negative"));
        }
        if self.fd_step == self.fd_check_step {
            return Err(bad("fd_check_step", "must differ from fd_step"));
        }
        if !self.poles.iter().all(|p| p.is_finite()) || !self.poles.contains(&0.0) {
            return Err(bad("poles", "must be finite and contain 0 (the touchdown-normal direction)"));
        }
        Ok(())
    }

    pub fn walker(&self) -> WalkerParams {
        WalkerParams { m: self.mass, g: self.gravity, r0: self.leg_length, theta_h: self.hip_angle }
    }

    pub fn synthesis(&self) -> SynthesisOptions {
        let i = self.poles.iter().position(|p| *p == 0.0).expect("validated");
        let rest: Vec<f64> = self.poles.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, p)| *p).collect();
        SynthesisOptions {
            knots: self.knots,
            knot_step: self.knot_step,
            clearance: self.clearance,
            min_descent: self.min_descent,
            theta0: self.theta0,
            thetadot0: self.thetadot0,
            poles: [rest[0], rest[1], rest[2]],
            ..SynthesisOptions::default()
        }
    }

    pub fn verify(&self) -> VerifyOptions {
        VerifyOptions {
            embed: EmbedOptions { h: self.h_embed, ..EmbedOptions::default() },
            window_resolution: self.window_resolution,
            ..VerifyOptions::default()
        }
    }

    pub fn design(&self) -> DesignOptions {
        DesignOptions {
            eta: self.eta,
            n_grad: self.n_grad,
            s_min: self.s_min,
            s_tol: self.s_tol,
            fd_step: self.fd_step,
            fd_check_step: self.fd_check_step,
            fd_rel_tol: self.fd_rel_tol,
            max_rounds: self.max_rounds,
            verify: self.verify(),
            ..DesignOptions::default()
        }
    }

    pub fn simulation(&self) -> OdeOptions {
        OdeOptions { h_max: self.h_sim, event_tol: self.event_tol, ..OdeOptions::with_tolerance(self.sim_tol) }
    }
}
