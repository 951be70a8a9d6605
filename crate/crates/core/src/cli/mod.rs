//! Command-line dispatch. Exit codes: 0 success, 1 runtime failure, 2 usage error.

mod config;

pub use config::{parse_config_text, KeySpec, Kind, RunConfig, UsageError};

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{featurespace_select, mutual_coherence, pca_baseline, rate_sweep, FeatureSpaceInstance};
use crate::camsim::{acquire, measurements_csv, read_spim, scatter, write_spim, NoiseConfig, ScatterConfig};
use crate::error::{Error, Result};
use crate::image::{write_pgm, ImageGrid};
use crate::sampler::{measurement_count, read_spip, write_spip, PatternStack};
use crate::scene::{corrupt, Dataset, GenConfig, Split, MANIFEST_FILE};
use crate::train::{read_checkpoint, score_predictions, write_checkpoint, TrainConfig, TrainSession};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub const RESOLVED_CONFIG: &str = "resolved.cfg";

const fn key(name: &'static str, kind: Kind, default: Option<&'static str>, help: &'static str) -> KeySpec {
    KeySpec::new(name, kind, default, help)
}

const SEED: KeySpec = key("seed", Kind::Int, Some("0"), "seed for every random draw");

const TRAIN_KEYS: [KeySpec; 8] = [
    key("rate", Kind::Float, Some("0.1"), "sampling rate M/N²"),
    key("epochs", Kind::Int, Some("30"), "training epochs"),
    key("batch_size", Kind::Int, Some("16"), "mini-batch size"),
    key("lr", Kind::Float, Some("0.0002"), "Adam learning rate"),
    SEED,
    key("loss", Kind::Text, Some("mse"), "training loss"),
    key(
        "checkpoint_every",
        Kind::Int,
        Some("0"),
        "intermediate checkpoint period in epochs, 0 disables",
    ),
    key(
        "augment_pepper",
        Kind::Float,
        Some("0"),
        "pepper level applied to training scenes",
    ),
];

struct CommandSpec {
    name: &'static str,
    about: &'static str,
    keys: Vec<KeySpec>,
    needs_out: bool,
}

fn command_specs() -> Vec<CommandSpec> {
    let data = key("data", Kind::Text, None, "dataset directory or manifest");
    let checkpoint = key("checkpoint", Kind::Text, None, "SPCK model checkpoint");
    let split = key(
        "split",
        Kind::Text,
        Some("validation"),
        "dataset split (train|validation)",
    );
    let with_train = |mut keys: Vec<KeySpec>| {
        keys.extend(TRAIN_KEYS);
        keys
    };
    vec![
        CommandSpec {
            name: "gen-data",
            about: "Render a synthetic target/distractor dataset",
            keys: vec![
                key("canvas", Kind::Int, Some("32"), "image side N"),
                key("count", Kind::Int, Some("200"), "number of samples"),
                SEED,
                key(
                    "target",
                    Kind::Text,
                    Some("flower"),
                    "target kind (flower|disk|textured_blob)",
                ),
                key("distractors_min", Kind::Int, Some("1"), "fewest distractors per scene"),
                key("distractors_max", Kind::Int, Some("3"), "most distractors per scene"),
                key(
                    "background",
                    Kind::Text,
                    Some("none"),
                    "background kind (none|gradient|speckle)",
                ),
                key("background_level", Kind::Float, Some("0"), "background amplitude"),
            ],
            needs_out: true,
        },
        CommandSpec {
            name: "train",
            about: "Jointly learn binary patterns and the reconstruction network",
            keys: with_train(vec![
                data,
                key("resume", Kind::Text, Some(""), "checkpoint to continue from"),
            ]),
            needs_out: true,
        },
        CommandSpec {
            name: "export-patterns",
            about: "Write the binarized patterns of a checkpoint",
            keys: vec![
                checkpoint,
                key("previews", Kind::Int, Some("4"), "patterns also written as PGM"),
                SEED,
            ],
            needs_out: true,
        },
        CommandSpec {
            name: "acquire",
            about: "Simulate single-pixel acquisition of a scene or dataset split",
            keys: vec![
                key("patterns", Kind::Text, None, "SPIP pattern file"),
                key("scene", Kind::Text, Some(""), "single PGM scene"),
                key(
                    "data",
                    Kind::Text,
                    Some(""),
                    "dataset to acquire instead of a single scene",
                ),
                split,
                key("sigma", Kind::Float, Some("0"), "reading noise relative to mean |y|"),
                key("bits", Kind::Int, Some("0"), "ADC bits, 0 disables quantization"),
                key("scheme", Kind::Text, Some("differential"), "differential|calibrated"),
                key("psf_sigma", Kind::Float, Some("0"), "scattering blur sigma in pixels"),
                key("base_level", Kind::Float, Some("0"), "scattering haze level"),
                SEED,
            ],
            needs_out: true,
        },
        CommandSpec {
            name: "reconstruct",
            about: "Reconstruct images from SPIM measurements",
            keys: vec![
                checkpoint,
                key(
                    "measurements",
                    Kind::Text,
                    None,
                    "SPIM file or directory of meas_*.spim",
                ),
                SEED,
            ],
            needs_out: true,
        },
        CommandSpec {
            name: "evaluate",
            about: "Score reconstructions against target labels",
            keys: vec![
                checkpoint,
                data,
                split,
                key(
                    "measurements",
                    Kind::Text,
                    Some(""),
                    "directory of meas_<index>.spim to reconstruct from",
                ),
                key(
                    "corruption",
                    Kind::Text,
                    Some("pepper"),
                    "scene corruption kind (pepper|gaussian)",
                ),
                key("level", Kind::Float, Some("0"), "scene corruption level"),
                key(
                    "previews",
                    Kind::Int,
                    Some("4"),
                    "scene|label|reconstruction triptychs to write",
                ),
                SEED,
            ],
            needs_out: true,
        },
        CommandSpec {
            name: "coherence",
            about: "Mutual coherence of a pattern stack",
            keys: vec![
                key("patterns", Kind::Text, Some(""), "SPIP pattern file"),
                key(
                    "checkpoint",
                    Kind::Text,
                    Some(""),
                    "checkpoint whose patterns to analyze",
                ),
                SEED,
            ],
            needs_out: false,
        },
        CommandSpec {
            name: "sweep",
            about: "Train and evaluate one model per sampling rate",
            keys: with_train(vec![
                data,
                key("rates", Kind::FloatList, Some("0.2,0.1,0.05,0.025"), "sampling rates"),
            ])
            .into_iter()
            .filter(|k| k.name != "rate")
            .collect(),
            needs_out: true,
        },
        CommandSpec {
            name: "pca-baseline",
            about: "Principal-component reconstruction baseline",
            keys: vec![
                data,
                key("rate", Kind::Float, Some("0.1"), "sampling rate of the random patterns"),
                key("components", Kind::Int, Some("20"), "principal components"),
                key(
                    "patterns",
                    Kind::Text,
                    Some(""),
                    "SPIP patterns to use instead of random ones",
                ),
                SEED,
            ],
            needs_out: true,
        },
        CommandSpec {
            name: "featurespace-demo",
            about: "Feature-space object selection on constructed instances",
            keys: vec![
                key("dim", Kind::Int, Some("64"), "feature-space dimension"),
                key("others", Kind::Int, Some("3"), "non-target objects"),
                key("per_object", Kind::Int, Some("4"), "features per object"),
                key(
                    "shared",
                    Kind::Int,
                    Some("1"),
                    "target features shared with object 1 in the overlapping case",
                ),
                SEED,
            ],
            needs_out: false,
        },
    ]
}

fn build_cli(specs: &[CommandSpec]) -> Command {
    let mut cli = Command::new("objimg")
        .about("Learned binary single-pixel-camera patterns for object-selective imaging")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true);
    for spec in specs {
        let mut sub = Command::new(spec.name)
            .about(spec.about)
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .help("key=value defaults for this command"),
            )
            .arg(
                Arg::new("out")
                    .long("out")
                    .value_name("DIR")
                    .required(spec.needs_out)
                    .help("output directory"),
            );
        for k in &spec.keys {
            let mut help = k.help.to_string();
            if let Some(d) = k.default.filter(|d| !d.is_empty()) {
                help.push_str(&format!(" [default: {d}]"));
            }
            sub = sub.arg(Arg::new(k.name).long(k.flag()).value_name("VALUE").help(help));
        }
        cli = cli.subcommand(sub);
    }
    cli
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

type CmdResult = std::result::Result<(), Failure>;

/// Run one invocation and return its exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let specs = command_specs();
    let matches = match build_cli(&specs).try_get_matches_from(argv) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let spec = specs.iter().find(|s| s.name == name).expect("declared subcommand");
    match run(spec, sub) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            eprintln!("run `objimg {name} --help` for usage");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn run(spec: &CommandSpec, matches: &ArgMatches) -> CmdResult {
    let file = match matches.get_one::<String>("config") {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    let flags: Vec<(String, String)> = spec
        .keys
        .iter()
        .filter_map(|k| {
            matches
                .get_one::<String>(k.name)
                .map(|v| (k.name.to_string(), v.clone()))
        })
        .collect();
    let cfg = RunConfig::resolve(spec.name, &spec.keys, &file, &flags)?;
    let out = matches.get_one::<String>("out").map(PathBuf::from);
    if let Some(dir) = &out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(dir.join(RESOLVED_CONFIG), cfg.to_text().as_bytes())?;
    }
    let out = out.as_deref();
    match spec.name {
        "gen-data" => gen_data(&cfg, out.expect("required")),
        "train" => train_cmd(&cfg, out.expect("required")),
        "export-patterns" => export_patterns(&cfg, out.expect("required")),
        "acquire" => acquire_cmd(&cfg, out.expect("required")),
        "reconstruct" => reconstruct_cmd(&cfg, out.expect("required")),
        "evaluate" => evaluate_cmd(&cfg, out.expect("required")),
        "coherence" => coherence_cmd(&cfg, out),
        "sweep" => sweep_cmd(&cfg, out.expect("required")),
        "pca-baseline" => pca_cmd(&cfg, out.expect("required")),
        "featurespace-demo" => featurespace_cmd(&cfg, out),
        other => unreachable!("undeclared subcommand {other}"),
    }
}

fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr<Err = Error>>(cfg: &RunConfig, key: &str) -> std::result::Result<T, Failure> {
    cfg.text(key)
        .parse()
        .map_err(|e: Error| Failure::Usage(format!("--{}: {e}", key.replace('_', "-"))))
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    if path.is_dir() {
        Dataset::load(path.join(MANIFEST_FILE))
    } else {
        Dataset::load(path)
    }
}

fn train_config(cfg: &RunConfig, rate: f64) -> std::result::Result<TrainConfig, Failure> {
    let config = TrainConfig {
        rate,
        epochs: cfg.usize("epochs"),
        batch_size: cfg.usize("batch_size"),
        lr: cfg.float("lr"),
        seed: cfg.uint("seed"),
        loss: parse(cfg, "loss")?,
        checkpoint_every: cfg.usize("checkpoint_every"),
        augment_pepper: cfg.float("augment_pepper"),
    };
    config.validate()?;
    Ok(config)
}

/// Per-sample file names, keyed by dataset index.
pub fn measurement_file(index: usize) -> String {
    format!("meas_{index:05}.spim")
}

pub fn recon_file(index: usize) -> String {
    format!("recon_{index:05}.pgm")
}

fn gen_data(cfg: &RunConfig, out: &Path) -> CmdResult {
    let mut gen = GenConfig::new(cfg.usize("canvas"), cfg.usize("count"), cfg.uint("seed"));
    gen.target = parse(cfg, "target")?;
    gen.background = parse(cfg, "background")?;
    gen.background_level = cfg.float("background_level");
    gen.distractors_min = cfg.usize("distractors_min");
    gen.distractors_max = cfg.usize("distractors_max");
    gen.validate()?;
    let mut ds = Dataset::generate(&gen)?;
    let manifest = ds.write(out)?;
    println!(
        "wrote {} samples to {} (digest {})",
        ds.samples.len(),
        manifest.display(),
        ds.manifest.digest()
    );
    Ok(())
}

fn train_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let ds = load_dataset(&cfg.path("data").expect("required"))?;
    let config = train_config(cfg, cfg.float("rate"))?;
    let mut session = match cfg.path("resume") {
        Some(p) => {
            let mut ck = read_checkpoint(p)?;
            ck.config.epochs = config.epochs;
            TrainSession::resume(ck, &ds)?
        }
        None => TrainSession::new(&ds, config)?,
    };
    session.run(&ds, Some(out))?;
    write_checkpoint(out.join("model.spck"), &session.checkpoint)?;
    session.history().write_csv(out.join("history.csv"))?;
    if let Some(last) = session.history().records.last() {
        println!(
            "epoch {} train_loss={:.6} val_loss={:.6} val_psnr={:.3} val_ssim={:.4}",
            last.epoch, last.train_loss, last.val_loss, last.val_psnr, last.val_ssim
        );
    }
    Ok(())
}

fn export_patterns(cfg: &RunConfig, out: &Path) -> CmdResult {
    let ck = read_checkpoint(cfg.path("checkpoint").expect("required"))?;
    let stack = ck.model.patterns()?;
    write_spip(out.join("patterns.spip"), &stack)?;
    for i in 0..cfg.usize("previews").min(stack.m()) {
        write_pgm(out.join(format!("pattern_{i:05}.pgm")), &stack.pattern_image(i))?;
    }
    println!("exported {} patterns of {}×{}", stack.m(), stack.n(), stack.n());
    Ok(())
}

fn acquire_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let stack = read_spip(cfg.path("patterns").expect("required"))?;
    let bits = cfg.uint("bits") as u32;
    let noise = NoiseConfig {
        gaussian_sigma: cfg.float("sigma"),
        quantization_bits: (bits > 0).then_some(bits),
        seed: cfg.uint("seed"),
        scheme: parse(cfg, "scheme")?,
    };
    noise.validate()?;
    let medium = ScatterConfig {
        psf_sigma: cfg.float("psf_sigma"),
        base_level: cfg.float("base_level"),
    };
    medium.validate()?;
    let through_medium = |scene: &ImageGrid| -> Result<ImageGrid> {
        if medium.psf_sigma > 0.0 || medium.base_level > 0.0 {
            scatter(scene, &medium)
        } else {
            Ok(scene.clone())
        }
    };
    match (cfg.path("scene"), cfg.path("data")) {
        (Some(scene), None) => {
            let scene = crate::image::read_pgm(scene)?;
            let y = acquire(&through_medium(&scene)?, &stack, &noise)?;
            write_spim(out.join("measurement.spim"), &y)?;
            write_file(out.join("measurement.csv"), measurements_csv(&y).as_bytes())?;
            println!("acquired {} measurements", y.len());
        }
        (None, Some(data)) => {
            let ds = load_dataset(&data)?;
            let split: Split = parse(cfg, "split")?;
            let indices = ds.manifest.indices(split);
            for &i in &indices {
                let per_sample = NoiseConfig {
                    seed: noise.seed.wrapping_add(i as u64),
                    ..noise
                };
                let y = acquire(&through_medium(&ds.samples[i].scene)?, &stack, &per_sample)?;
                write_spim(out.join(measurement_file(i)), &y)?;
            }
            println!("acquired {} scenes × {} measurements", indices.len(), stack.m());
        }
        _ => return Err(Failure::Usage("acquire needs exactly one of --scene or --data".into())),
    }
    Ok(())
}

fn reconstruct_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let ck = read_checkpoint(cfg.path("checkpoint").expect("required"))?;
    let source = cfg.path("measurements").expect("required");
    if source.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&source)
            .map_err(|e| Error::io(&source, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("meas_") && n.ends_with(".spim"))
            })
            .collect();
        files.sort();
        for f in &files {
            let y = read_spim(f)?;
            let img = ck.model.recon.reconstruct(&y).map_err(|e| e.context(f.display()))?;
            let stem = f.file_stem().and_then(|s| s.to_str()).expect("utf-8 name");
            write_pgm(out.join(format!("recon_{}.pgm", &stem["meas_".len()..])), &img)?;
        }
        println!("reconstructed {} measurement files", files.len());
    } else {
        let y = read_spim(&source)?;
        let img = ck.model.recon.reconstruct(&y)?;
        write_pgm(out.join("recon.pgm"), &img)?;
        println!("reconstructed {}×{} image", img.height(), img.width());
    }
    Ok(())
}

fn evaluate_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let ck = read_checkpoint(cfg.path("checkpoint").expect("required"))?;
    let ds = load_dataset(&cfg.path("data").expect("required"))?;
    let split: Split = parse(cfg, "split")?;
    let level = cfg.float("level");
    let kind = parse(cfg, "corruption")?;
    let measured = cfg.path("measurements");
    if measured.is_some() && level > 0.0 {
        return Err(Failure::Usage(
            "--level applies to scenes, not to stored measurements".into(),
        ));
    }
    let seed = cfg.uint("seed");
    let mut items = Vec::new();
    for i in ds.manifest.indices(split) {
        let pair = &ds.samples[i];
        let (scene, pred) = match &measured {
            Some(dir) => {
                let y = read_spim(dir.join(measurement_file(i)))?;
                (pair.scene.clone(), ck.model.recon.reconstruct(&y)?)
            }
            None => {
                let scene = if level > 0.0 {
                    corrupt(&pair.scene, kind, level, seed.wrapping_add(i as u64))?
                } else {
                    pair.scene.clone()
                };
                let pred = ck.model.predict(&scene)?;
                (scene, pred)
            }
        };
        if items.len() < cfg.usize("previews") {
            let strip = ImageGrid::hstack(&[&scene, &pair.label, &pred])?;
            write_pgm(out.join(format!("triptych_{i:05}.pgm")), &strip)?;
        }
        items.push((i, pair, pred));
    }
    let report = score_predictions(items)?;
    write_file(out.join("report.csv"), report.to_csv().as_bytes())?;
    let sel = report.mean_selectivity.map_or("n/a".to_string(), |s| format!("{s:.6}"));
    println!(
        "samples={} mean_psnr={:.4} mean_ssim={:.4} mean_selectivity={sel}",
        report.rows.len(),
        report.mean_psnr,
        report.mean_ssim
    );
    Ok(())
}

fn coherence_cmd(cfg: &RunConfig, out: Option<&Path>) -> CmdResult {
    let stack = match (cfg.path("patterns"), cfg.path("checkpoint")) {
        (Some(p), None) => read_spip(p)?,
        (None, Some(c)) => read_checkpoint(c)?.model.patterns()?,
        _ => {
            return Err(Failure::Usage(
                "coherence needs exactly one of --patterns or --checkpoint".into(),
            ))
        }
    };
    let report = mutual_coherence(&stack)?;
    println!("{}", report.summary());
    if let Some(dir) = out {
        write_file(dir.join("coherence.txt"), format!("{}\n", report.summary()).as_bytes())?;
    }
    Ok(())
}

fn sweep_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let ds = load_dataset(&cfg.path("data").expect("required"))?;
    let rates = cfg.floats("rates");
    let config = train_config(cfg, rates.iter().copied().fold(f64::NAN, f64::max))?;
    let report = rate_sweep(&ds, &rates, &config)?;
    write_file(out.join("sweep.csv"), report.to_csv().as_bytes())?;
    print!("{}", report.to_csv());
    Ok(())
}

fn pca_cmd(cfg: &RunConfig, out: &Path) -> CmdResult {
    let ds = load_dataset(&cfg.path("data").expect("required"))?;
    let n = ds.manifest.canvas;
    let patterns = match cfg.path("patterns") {
        Some(p) => read_spip(p)?,
        None => {
            let m = measurement_count(cfg.float("rate"), n)?;
            PatternStack::random(m, n, &mut ChaCha8Rng::seed_from_u64(cfg.uint("seed")))
        }
    };
    let report = pca_baseline(&ds, &patterns, cfg.usize("components"))?;
    write_file(out.join("report.csv"), report.to_csv().as_bytes())?;
    println!(
        "M={} mean_psnr={:.4} mean_ssim={:.4}",
        patterns.m(),
        report.mean_psnr,
        report.mean_ssim
    );
    Ok(())
}

fn featurespace_cmd(cfg: &RunConfig, out: Option<&Path>) -> CmdResult {
    let (dim, others, per, shared, seed) = (
        cfg.usize("dim"),
        cfg.usize("others"),
        cfg.usize("per_object"),
        cfg.usize("shared"),
        cfg.uint("seed"),
    );
    let mut csv = String::from("case,shared,leakage\n");
    for (case, k) in [("orthogonal", 0), ("overlapping", shared)] {
        let inst = FeatureSpaceInstance::constructed(dim, others, per, k, seed)?;
        let sel = featurespace_select(&inst)?;
        println!("{case} shared={k} leakage={:e}", sel.leakage);
        csv.push_str(&format!("{case},{k},{:?}\n", sel.leakage));
    }
    if let Some(dir) = out {
        write_file(dir.join("featurespace.csv"), csv.as_bytes())?;
    }
    Ok(())
}
