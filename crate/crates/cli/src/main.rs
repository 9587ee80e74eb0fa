use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hybrid_tube::gait::{baseline_shape, design_tracking_gain, synthesize_gait, with_poles, GaitSpec};
use hybrid_tube::io::{export_tube, read_json, tube_to_csv, write_json, Certificate};
use hybrid_tube::montecarlo::{monte_carlo, TubeRegion};
use hybrid_tube::system::HybridSystem;
use hybrid_tube::verify::{rescale_tube, verify_tube, VerificationResult};
use hybrid_tube::Error;
use nalgebra::DVector;
use serde::Serialize;
use serde_json::json;

mod config;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "htube", version, about = "Reachable tubes and invariance certificates for a hopping walker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat TOML run configuration; defaults for every missing key.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Find a periodic gait and its touchdown controller.
    Synthesize(#[command(flatten)] Common),
    /// Certify the tube around a gait; exit 2 if not certified.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gait: PathBuf,
    },
    /// Tune the stance tracking gain to enlarge the certified tube.
    Design {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gait: PathBuf,
    },
    /// Simulate trajectories from the boundary of a certified tube.
    Montecarlo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gait: PathBuf,
        #[arg(long)]
        cert: PathBuf,
        /// Multiply every tube offset by this factor (falsification check).
        #[arg(long, default_value_t = 1.0)]
        inflate: f64,
    },
    /// Write the tube of a certificate as CSV.
    Export {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gait: PathBuf,
        #[arg(long)]
        cert: PathBuf,
    },
}

enum Outcome {
    Ok,
    NotGranted,
}

fn error_kind(e: &Error) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string()
}

fn error_record(e: &Error) -> serde_json::Value {
    let mut v = json!({ "status": "error", "error": error_kind(e), "message": e.to_string() });
    if let Error::Config { key, .. } = e {
        v["key"] = json!(key);
    }
    v
}

fn setup(c: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &c.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("config.resolved.toml"), cfg.to_toml())?;
    Ok(cfg)
}

fn print<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string(v).expect("summary serializes"));
}

fn load_gait(path: &Path, cfg: &RunConfig) -> Result<GaitSpec, Error> {
    let gait: GaitSpec = read_json(path)?;
    with_poles(&gait, &cfg.synthesis().poles)
}

fn write_tube(cfg: &RunConfig, gait: &GaitSpec, r: &VerificationResult) -> Result<(), Error> {
    let guard = gait.closed_loop(gait.k_track).guard().clone();
    std::fs::write(cfg.out_dir.join("tube.csv"), tube_to_csv(&export_tube(r, &guard)?)?)?;
    Ok(())
}

fn synthesize(c: &Common) -> Result<Outcome, Error> {
    let cfg = setup(c)?;
    let gait = synthesize_gait(&cfg.walker(), &cfg.synthesis())?;
    write_json(&cfg.out_dir.join("gait.json"), &gait)?;
    print(&json!({
        "status": "ok",
        "residual": gait.residual,
        "period": gait.period,
        "x_star": gait.x_star,
        "k_ds": gait.k_ds,
    }));
    Ok(Outcome::Ok)
}

fn verify(c: &Common, gait_path: &Path) -> Result<Outcome, Error> {
    let cfg = setup(c)?;
    let gait = load_gait(gait_path, &cfg)?;
    let k = gait.k_track;
    let alpha0 = baseline_shape(&gait, k, cfg.shape_margin)?;
    let x_star = DVector::from_row_slice(&gait.x_star);
    let sys = gait.closed_loop(k);
    let (s, r) = match rescale_tube(&sys, &x_star, &alpha0, cfg.s_tol, &cfg.verify()) {
        Ok(v) => v,
        Err(Error::NoVerifiableScale) => {
            print(&json!({ "status": "not_granted", "reason": Error::NoVerifiableScale.to_string() }));
            return Ok(Outcome::NotGranted);
        }
        Err(e) => return Err(e),
    };
    let cert = Certificate::new(&r, s, &x_star, &alpha0, k, gait.k_ds);
    write_json(&cfg.out_dir.join("certificate.json"), &cert)?;
    write_tube(&cfg, &gait, &r)?;
    print(&json!({
        "status": if cert.verified { "verified" } else { "not_granted" },
        "gamma": cert.gamma,
        "s_star": cert.s_star,
        "t_under": cert.t_under,
        "t_over": cert.t_over,
        "conditions": cert.conditions,
    }));
    Ok(if cert.verified { Outcome::Ok } else { Outcome::NotGranted })
}

fn design(c: &Common, gait_path: &Path) -> Result<Outcome, Error> {
    let cfg = setup(c)?;
    let gait = GaitSpec { k_track: [0.0; 4], ..load_gait(gait_path, &cfg)? };
    let alpha0 = baseline_shape(&gait, [0.0; 4], cfg.shape_margin)?;
    let x_star = DVector::from_row_slice(&gait.x_star);
    let out = design_tracking_gain(&gait, &alpha0, &cfg.design())?;
    let s_final = out.baseline_scale * out.enlargement;
    let designed = GaitSpec { k_track: out.k_track, ..gait };
    let cert = Certificate::new(&out.result, s_final, &x_star, &alpha0, out.k_track, designed.k_ds);
    write_json(&cfg.out_dir.join("gait.json"), &designed)?;
    write_json(&cfg.out_dir.join("certificate.json"), &cert)?;
    write_json(
        &cfg.out_dir.join("design.json"),
        &json!({
            "k_track": out.k_track,
            "baseline_scale": out.baseline_scale,
            "final_scale": s_final,
            "enlargement": out.enlargement,
            "history": out.history,
        }),
    )?;
    let mut hist = String::from("step,phi,k0,k1,k2,k3\n");
    for (i, (phi, k)) in out.history.phi.iter().zip(&out.history.gains).enumerate() {
        hist.push_str(&format!("{i},{phi},{},{},{},{}\n", k[0], k[1], k[2], k[3]));
    }
    std::fs::write(cfg.out_dir.join("phi_history.csv"), hist)?;
    write_tube(&cfg, &designed, &out.result)?;
    print(&json!({
        "status": if cert.verified { "verified" } else { "not_granted" },
        "k_track": out.k_track,
        "baseline_scale": out.baseline_scale,
        "final_scale": s_final,
        "enlargement": out.enlargement,
        "rounds": out.history.scales.len(),
    }));
    Ok(if cert.verified { Outcome::Ok } else { Outcome::NotGranted })
}

/// Rebuilds the certified tube from a gait and certificate.
fn recertify(cfg: &RunConfig, gait_path: &Path, cert_path: &Path) -> Result<(GaitSpec, Certificate, VerificationResult), Error> {
    let gait: GaitSpec = read_json(gait_path)?;
    let cert: Certificate = read_json(cert_path)?;
    if cert.x_star.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, found: cert.x_star.len() });
    }
    let gait = GaitSpec { k_track: cert.k_track, k_ds: cert.k_ds, ..gait };
    let r = verify_tube(&gait.closed_loop(cert.k_track), &DVector::from_row_slice(&cert.x_star), &cert.shape()?, &cfg.verify())?;
    Ok((gait, cert, r))
}

fn montecarlo(c: &Common, gait_path: &Path, cert_path: &Path, inflate: f64) -> Result<Outcome, Error> {
    let cfg = setup(c)?;
    if !(inflate > 0.0 && inflate.is_finite()) {
        return Err(Error::InvalidParameter { name: "inflate", reason: "must be positive".into() });
    }
    let (gait, cert, r) = recertify(&cfg, gait_path, cert_path)?;
    let region = TubeRegion::from_result(&r).inflated(inflate)?;
    let sys = gait.closed_loop(cert.k_track);
    let x_star = DVector::from_row_slice(&cert.x_star);
    let report = monte_carlo(&sys, &region, &x_star, cfg.n_traj, cfg.n_crossings, cfg.seed, &cfg.simulation());
    write_json(&cfg.out_dir.join("montecarlo.json"), &report)?;
    print(&json!({
        "status": if report.escapes == 0 { "ok" } else { "escapes" },
        "inflate": inflate,
        "n_traj": report.n_traj,
        "n_crossings": report.n_crossings,
        "escapes": report.escapes,
        "failures": report.failures,
        "max_post_norm": report.max_post_norm,
    }));
    Ok(if report.escapes == 0 { Outcome::Ok } else { Outcome::NotGranted })
}

fn export(c: &Common, gait_path: &Path, cert_path: &Path) -> Result<Outcome, Error> {
    let cfg = setup(c)?;
    let (gait, _, r) = recertify(&cfg, gait_path, cert_path)?;
    write_tube(&cfg, &gait, &r)?;
    print(&json!({ "status": "ok", "rows": r.tube.len() }));
    Ok(Outcome::Ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Synthesize(c) => synthesize(c),
        Command::Verify { common, gait } => verify(common, gait),
        Command::Design { common, gait } => design(common, gait),
        Command::Montecarlo { common, gait, cert, inflate } => montecarlo(common, gait, cert, *inflate),
        Command::Export { common, gait, cert } => export(common, gait, cert),
    };
    match res {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::NotGranted) => ExitCode::from(2),
        Err(e) => {
            println!("{}", error_record(&e));
            ExitCode::from(1)
        }
    }
}
