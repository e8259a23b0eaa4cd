//! `stseg` command line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use serde_json::json;
use stseg::eval::DEFAULT_TOLERANCE_FRACTION;
use stseg::io::{read_ground_truth, read_json, write_frames, write_ground_truth, write_json};
use stseg::pipeline::{evaluate, read_levels, run_boundaries, run_pipeline};
use stseg::synth::{synth_video, SyntheticSpec};
use stseg::{Error, ErrorClass, PipelineConfig};

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn config_args() -> Vec<Arg> {
    let mut args = vec![
        Arg::new("config")
            .long("config")
            .value_name("FILE")
            .value_parser(value_parser!(PathBuf))
            .help("Flat key = value configuration file; flags override it"),
        Arg::new("input")
            .long("input")
            .value_name("DIR")
            .required(true)
            .value_parser(value_parser!(PathBuf))
            .help("Directory of numbered frames"),
        Arg::new("output")
            .long("output")
            .value_name("DIR")
            .required(true)
            .value_parser(value_parser!(PathBuf))
            .help("Directory receiving all results"),
        Arg::new("no-reduction")
            .long("no-reduction")
            .action(ArgAction::SetTrue)
            .help("Solve the full voxel graph at full resolution"),
    ];
    for &key in PipelineConfig::KEYS {
        let mut arg = Arg::new(key).long(flag_name(key)).value_name("VALUE");
        if PipelineConfig::is_switch(key) {
            arg = arg.num_args(0..=1).default_missing_value("true").require_equals(true);
        }
        args.push(arg.help(format!("Override the `{key}` configuration key")));
    }
    args
}

fn cli() -> Command {
    Command::new("stseg")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Spectral spatio-temporal video segmentation")
        .subcommand_required(true)
        .arg(
            Arg::new("error-json")
                .long("error-json")
                .global(true)
                .action(ArgAction::SetTrue)
                .help("On failure, print a JSON error object on stdout"),
        )
        .subcommand(
            Command::new("segment")
                .about("Run the full pipeline: boundaries, watershed and hierarchy")
                .args(config_args()),
        )
        .subcommand(
            Command::new("boundaries")
                .about("Stop after computing boundary and motion-boundary volumes")
                .args(config_args()),
        )
        .subcommand(
            Command::new("eval")
                .about("Score the hierarchy in an output directory against ground truth")
                .arg(
                    Arg::new("output")
                        .long("output")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("Output directory written by `segment`"),
                )
                .arg(
                    Arg::new("gt")
                        .long("gt")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf))
                        .help("Ground-truth directory"),
                )
                .arg(
                    Arg::new("tolerance-fraction")
                        .long("tolerance-fraction")
                        .value_name("FRACTION")
                        .value_parser(value_parser!(f64))
                        .default_value(DEFAULT_TOLERANCE_FRACTION.to_string())
                        .help("Boundary matching tolerance as a fraction of the image diagonal"),
                )
                .arg(
                    Arg::new("report")
                        .long("report")
                        .value_name("FILE")
                        .value_parser(value_parser!(PathBuf))
                        .help("Also write the full report (curves and scores) as JSON"),
                ),
        )
        .subcommand(
            Command::new("synth")
                .about("Generate a synthetic sequence with ground truth")
                .arg(
                    Arg::new("output")
                        .long("output")
                        .value_name("DIR")
                        .required(true)
                        .value_parser(value_parser!(PathBuf)),
                )
                .arg(
                    Arg::new("spec")
                        .long("spec")
                        .value_name("FILE")
                        .value_parser(value_parser!(PathBuf))
                        .help("JSON scene description; replaces the moving-rectangle options"),
                )
                .arg(usize_arg("frames", "10"))
                .arg(usize_arg("height", "32"))
                .arg(usize_arg("width", "32"))
                .arg(f64_arg("speed", "1.0", "Rectangle speed in pixels per frame"))
                .arg(f64_arg("noise", "0.02", "Standard deviation of Gaussian noise"))
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .default_value("0"),
                ),
        )
}

fn usize_arg(name: &'static str, default: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_parser(value_parser!(usize))
        .default_value(default)
}

fn f64_arg(name: &'static str, default: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .value_parser(value_parser!(f64))
        .default_value(default)
        .help(help)
}

fn build_config(m: &ArgMatches) -> stseg::Result<PipelineConfig> {
    let mut cfg = match m.get_one::<PathBuf>("config") {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let given = |key: &str| m.get_one::<String>(key).is_some();
    for &key in PipelineConfig::KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            cfg.set(key, value)?;
        }
    }
    if m.get_flag("no-reduction") {
        cfg.reduction = false;
    }
    if given("scales") {
        cfg.fit_per_scale_lists(!given("scale_weights"), !given("window"));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline(m: &ArgMatches, full: bool) -> stseg::Result<serde_json::Value> {
    let cfg = build_config(m)?;
    let input = m.get_one::<PathBuf>("input").expect("required");
    let output = m.get_one::<PathBuf>("output").expect("required");
    let manifest = if full {
        run_pipeline(&cfg, input, output)?
    } else {
        run_boundaries(&cfg, input, output)?
    };
    let seconds: f64 = manifest.timings.iter().map(|(_, s)| s).sum();
    Ok(json!({
        "output": output,
        "frames": manifest.frames,
        "height": manifest.height,
        "width": manifest.width,
        "region_counts": manifest.hierarchy.as_ref().map(|h| &h.region_counts),
        "seconds": seconds,
    }))
}

fn eval(m: &ArgMatches) -> stseg::Result<serde_json::Value> {
    let output = m.get_one::<PathBuf>("output").expect("required");
    let gt = read_ground_truth(m.get_one::<PathBuf>("gt").expect("required"))?;
    let tolerance = *m.get_one::<f64>("tolerance-fraction").expect("defaulted");
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::Config(format!("tolerance fraction must be positive, got {tolerance}")));
    }
    let levels = read_levels(output)?;
    let report = evaluate(&levels, &gt, tolerance)?;
    if let Some(path) = m.get_one::<PathBuf>("report") {
        write_json(path, &report)?;
    }
    Ok(serde_json::to_value(report.scores).expect("scores serialize"))
}

fn synth(m: &ArgMatches) -> stseg::Result<serde_json::Value> {
    let output = m.get_one::<PathBuf>("output").expect("required");
    let spec: SyntheticSpec = match m.get_one::<PathBuf>("spec") {
        Some(path) => read_json(path)?,
        None => SyntheticSpec::moving_rectangle(
            *m.get_one("frames").expect("defaulted"),
            *m.get_one("height").expect("defaulted"),
            *m.get_one("width").expect("defaulted"),
            *m.get_one("speed").expect("defaulted"),
            *m.get_one("noise").expect("defaulted"),
            *m.get_one("seed").expect("defaulted"),
        ),
    };
    let (video, gt) = synth_video(&spec)?;
    let frames = output.join("frames");
    write_frames(&video, &frames)?;
    write_ground_truth(&gt, &output.join("gt"))?;
    write_json(&output.join("spec.json"), &spec)?;
    Ok(json!({ "frames": frames, "gt": output.join("gt") }))
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Input => 3,
        ErrorClass::Numerical => 4,
    }
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Input => "input",
        ErrorClass::Numerical => "numerical",
    }
}

fn report_error(json_errors: bool, message: &str, class: ErrorClass) -> ExitCode {
    let code = exit_code(class);
    if json_errors {
        let obj = json!({ "error": message, "class": class_name(class), "exit_code": code });
        println!("{obj}");
    } else {
        eprintln!("error: {message}");
    }
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STSEG_LOG", "warn")).init();
    let raw: Vec<String> = std::env::args().collect();
    let matches = match cli().try_get_matches_from(&raw) {
        Ok(m) => m,
        Err(e) if !e.use_stderr() => {
            // help and version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) if raw.iter().any(|a| a == "--error-json") => {
            let message = e.kind().to_string();
            return report_error(true, &format!("{message}: {}", e.render()), ErrorClass::Config);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    let json_errors = matches.get_flag("error-json");
    let result = match matches.subcommand() {
        Some(("segment", m)) => pipeline(m, true),
        Some(("boundaries", m)) => pipeline(m, false),
        Some(("eval", m)) => eval(m),
        Some(("synth", m)) => synth(m),
        _ => unreachable!("a subcommand is required"),
    };
    match result {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => report_error(json_errors, &e.to_string(), e.class()),
    }
}
