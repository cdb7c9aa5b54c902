//! `cmvf synth|train|eval|ablate|gradcheck`.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cmvf_core::data::{
    frequency_stats, group_students, split_per_student, synthesize, Dataset, StudentGroups, TRAIN_RATIO,
};
use cmvf_core::encoder::{LstmEncoder, SequenceEncoder};
use cmvf_core::metrics::{self, MetricsReport};
use cmvf_core::numcore::{gradient_check, GradCheckOptions, GradCheckReport};
use cmvf_core::objective::{batch_objective, RecordItem, RecordNoise, StudentBatch, Variant};
use cmvf_core::trainer::{score_split, Diverged};
use cmvf_core::variational::PriorWeight;
use cmvf_core::{Checkpoint, ModelDims, ModelParams, Trainer};

use crate::checkpoint;
use crate::config::{all_keys, RunConfig, SYNTH_SOURCE};
use crate::csvio;
use crate::error::{CliError, EXIT_USAGE};
use crate::report;

pub const GRADCHECK_TOL: f64 = 1e-4;
pub const COMMANDS: [&str; 5] = ["synth", "train", "eval", "ablate", "gradcheck"];

pub fn command() -> Command {
    let mut args = vec![Arg::new("config").long("config").value_name("PATH").help("flat key = value file")];
    for key in all_keys() {
        args.push(Arg::new(key.clone()).long(key).value_name("VALUE"));
    }
    let sub = |name: &'static str, about: &'static str| Command::new(name).about(about).args(args.clone());
    Command::new("cmvf")
        .about("Cognition-mode aware variational knowledge tracing")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(sub("synth", "write a synthetic practice log"))
        .subcommand(sub("train", "train one model and report test metrics"))
        .subcommand(sub("eval", "evaluate a checkpoint"))
        .subcommand(sub("ablate", "train and compare every variant"))
        .subcommand(
            sub("gradcheck", "compare reverse-mode gradients with finite differences")
                .arg(Arg::new("corrupt").long("corrupt").value_name("PARAM").hide(true)),
        )
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match dispatch(&matches) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(matches: &ArgMatches) -> Result<(), CliError> {
    let (name, sub) = matches.subcommand().ok_or_else(|| CliError::Usage("no command given".into()))?;
    let mut cfg = RunConfig::default();
    if name == "gradcheck" {
        tiny_defaults(&mut cfg);
    }
    if let Some(path) = sub.get_one::<String>("config") {
        cfg.apply_file(Path::new(path))?;
    }
    for key in all_keys() {
        if let Some(v) = sub.get_one::<String>(&key) {
            cfg.set(&key, v)?;
        }
    }
    cfg.validate()?;
    match name {
        "synth" => cmd_synth(&cfg),
        "train" => cmd_train(&cfg),
        "eval" => cmd_eval(&cfg),
        "ablate" => cmd_ablate(&cfg),
        "gradcheck" => cmd_gradcheck(&cfg, sub.get_one::<String>("corrupt").cloned()).map(|_| ()),
        other => Err(CliError::Usage(format!("unknown command `{other}`"))),
    }
}

fn tiny_defaults(cfg: &mut RunConfig) {
    cfg.data = Some(SYNTH_SOURCE.into());
    cfg.train.d = 4;
    cfg.train.capsules = 3;
    cfg.synth.students = 4;
    cfg.synth.questions = 8;
    cfg.synth.concepts = 4;
    cfg.synth.max_len = 8;
}

pub fn load_data(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match cfg.data.as_deref() {
        None => Err(CliError::Config("missing required field `data` (a CSV path or `synth`)".into())),
        Some(SYNTH_SOURCE) => Ok(synthesize(&cfg.synth, cfg.train.seed)?.0),
        Some(path) => csvio::load_csv(Path::new(path)),
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let out = cfg.out.clone().ok_or_else(|| CliError::Config("missing required field `out`".into()))?;
    fs::create_dir_all(&out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    Ok(out)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let (data, _) = synthesize(&cfg.synth, cfg.train.seed)?;
    csvio::write_csv(&out.join("data.csv"), &data)?;
    write(&out.join("config.resolved"), &cfg.resolved())?;
    println!(
        "wrote {} events for {} students ({} questions, {} concepts) to {}",
        data.event_count(),
        data.student_count(),
        data.question_count(),
        data.concept_count(),
        out.join("data.csv").display()
    );
    Ok(())
}

/// Data split shared by every command: per-student 80/20 plus the
/// frequency bands computed on total counts.
pub struct Protocol {
    pub train: Dataset,
    pub test: Dataset,
    pub groups: StudentGroups,
}

pub fn protocol(data: &Dataset) -> Result<Protocol, CliError> {
    let (train, test) = split_per_student(data, TRAIN_RATIO)?;
    Ok(Protocol { train, test, groups: group_students(data)? })
}

fn test_reports(ck: &Checkpoint, p: &Protocol, enc: &dyn SequenceEncoder) -> Result<Vec<MetricsReport>, CliError> {
    let model = ck.best_model()?;
    let scored = score_split(&model, enc, &ck.config.objective(), &p.train, &p.test)?;
    Ok(metrics::group_report(&scored, &p.groups.frequent, &p.groups.infrequent)?)
}

fn resolve_base(cfg: &RunConfig, p: &Protocol, enc: &dyn SequenceEncoder) -> Result<Option<f64>, CliError> {
    let Some(base) = cfg.base.as_deref() else { return Ok(None) };
    if let Ok(v) = base.parse::<f64>() {
        return Ok(Some(v));
    }
    let ck = checkpoint::load(Path::new(base))?;
    check_vocabulary(&ck, &p.train)?;
    let overall = test_reports(&ck, p, enc)?.into_iter().next().and_then(|r| r.auc);
    overall.map(Some).ok_or_else(|| CliError::Data("base checkpoint has an undefined overall AUC".into()))
}

fn with_base(reports: Vec<MetricsReport>, base: Option<f64>) -> Result<Vec<MetricsReport>, CliError> {
    match base {
        None => Ok(reports),
        Some(b) => reports.into_iter().map(|r| r.with_base(b).map_err(CliError::from)).collect(),
    }
}

fn check_vocabulary(ck: &Checkpoint, data: &Dataset) -> Result<(), CliError> {
    if *ck.ids != *data.ids {
        return Err(CliError::Data(format!(
            "vocabulary mismatch: checkpoint covers {} students / {} questions / {} concepts, \
             dataset has {} / {} / {} (or the same counts with different ids)",
            ck.ids.students.len(),
            ck.ids.questions.len(),
            ck.ids.concepts.len(),
            data.student_count(),
            data.question_count(),
            data.concept_count()
        )));
    }
    Ok(())
}

fn diverged(d: Diverged, out: &Path) -> CliError {
    if let Err(e) = checkpoint::save(&d.last_good, &out.join("checkpoint.bin")) {
        return e;
    }
    let _ = write(&out.join("history.csv"), &report::history_csv(&d.last_good.history));
    match d.error {
        cmvf_core::Error::NonFinite { .. } => CliError::Numeric(format!(
            "{}; last good checkpoint (epoch {}) written to {}",
            d.error,
            d.last_good.epoch,
            out.join("checkpoint.bin").display()
        )),
        other => CliError::Core(other),
    }
}

/// Trains one model into `out` and returns its test reports.
fn train_into(cfg: &RunConfig, p: &Protocol, out: &Path) -> Result<Vec<MetricsReport>, CliError> {
    fs::create_dir_all(out)?;
    write(&out.join("config.resolved"), &cfg.resolved())?;
    let enc = LstmEncoder;
    let trainer = Trainer::new(&p.train, cfg.train.clone(), &enc)?;
    let start = trainer.start()?;
    let mut log = |r: &cmvf_core::trainer::EpochRecord| {
        let auc = r.valid_auc.map_or("undefined".into(), |a| format!("{a:.4}"));
        eprintln!("[{}] epoch {:>3}  loss {:.5}  valid auc {auc}", cfg.train.variant, r.epoch, r.loss.total);
    };
    let ck = trainer.run(start, None, &mut log).map_err(|d| diverged(d, out))?;
    checkpoint::save(&ck, &out.join("checkpoint.bin"))?;
    write(&out.join("history.csv"), &report::history_csv(&ck.history))?;

    let reports = with_base(test_reports(&ck, p, &enc)?, resolve_base(cfg, p, &enc)?)?;
    let mut kv = report::kv_lines("", &reports);
    kv.push(format!("train.epochs={}", ck.epoch));
    kv.push(format!("train.best_epoch={}", ck.best_epoch));
    kv.push(format!("valid.best_auc={}", ck.best_auc().map_or("undefined".into(), |a| format!("{a:?}"))));
    write(&out.join("report.kv"), &(kv.join("\n") + "\n"))?;
    Ok(reports)
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let data = load_data(cfg)?;
    let p = protocol(&data)?;
    let reports = train_into(cfg, &p, &out)?;
    print!("{}", report::table(&reports));
    Ok(())
}

fn cmd_eval(cfg: &RunConfig) -> Result<(), CliError> {
    let path = match (&cfg.checkpoint, &cfg.out) {
        (Some(c), _) => c.clone(),
        (None, Some(o)) => o.join("checkpoint.bin"),
        (None, None) => return Err(CliError::Config("missing required field `checkpoint`".into())),
    };
    let ck = checkpoint::load(&path)?;
    let data = load_data(cfg)?;
    check_vocabulary(&ck, &data)?;
    let p = protocol(&data)?;
    let enc = LstmEncoder;
    let reports = with_base(test_reports(&ck, &p, &enc)?, resolve_base(cfg, &p, &enc)?)?;

    let trainer = Trainer::new(&p.train, ck.config.clone(), &enc)?;
    let scored = trainer.validate(&ck.best_model()?)?;
    let (preds, labels): (Vec<f64>, Vec<bool>) = scored.iter().map(|s| (s.pred, s.label)).unzip();
    let valid_auc = metrics::auc(&preds, &labels).ok();

    let mut kv = report::kv_lines("", &reports);
    kv.push(format!("valid.auc={}", valid_auc.map_or("undefined".into(), |a| format!("{a:?}"))));
    if let Some(out) = &cfg.out {
        fs::create_dir_all(out)?;
        write(&out.join("report.kv"), &(kv.join("\n") + "\n"))?;
        write(&out.join("config.resolved"), &cfg.resolved())?;
    }
    print!("{}", report::table(&reports));
    println!("validation AUC {}", valid_auc.map_or("undefined".into(), |a| format!("{a:.6}")));
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig) -> Result<(), CliError> {
    let out = out_dir(cfg)?;
    let data = load_data(cfg)?;
    let p = protocol(&data)?;
    write(&out.join("config.resolved"), &cfg.resolved())?;
    let mut rows = Vec::new();
    let mut kv = Vec::new();
    for v in Variant::ALL {
        let mut vc = cfg.clone();
        vc.train.variant = v;
        vc.out = Some(out.join(v.tag()));
        let reports = train_into(&vc, &p, &out.join(v.tag()))?;
        kv.extend(report::kv_lines(&format!("{}.", v.tag()), &reports));
        rows.push((v.tag().to_string(), reports));
    }
    let table = report::ablation_table(&rows);
    write(&out.join("ablation.txt"), &table)?;
    write(&out.join("report.kv"), &(kv.join("\n") + "\n"))?;
    print!("{table}");
    Ok(())
}

pub fn param_group(name: &str) -> &'static str {
    match name.split('.').next().unwrap_or("") {
        "encoder" => "encoder",
        "head" => "heads",
        "capsules" => "capsules",
        "predictor" => "predictor",
        "embedding" => "embeddings",
        _ => "other",
    }
}

/// Full-model gradient check with frozen noise. Fails with a numeric error
/// when the tolerance is exceeded.
pub fn cmd_gradcheck(cfg: &RunConfig, corrupt: Option<String>) -> Result<GradCheckReport, CliError> {
    let data = load_data(cfg)?;
    let tc = &cfg.train;
    let enc = LstmEncoder;
    let dims = ModelDims {
        d: tc.d,
        capsules: tc.capsules,
        students: data.student_count(),
        questions: data.question_count(),
        concepts: data.concept_count(),
    };
    let mut model = ModelParams::init(dims, &enc.param_specs(&dims), tc.seed)?;
    let stats = frequency_stats(&data);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let draws = if tc.variant.samples_noise() { tc.samples } else { 0 };
    let batches: Vec<StudentBatch> = data
        .sequences
        .iter()
        .take(4)
        .map(|s| StudentBatch {
            events: &s.events,
            items: s
                .events
                .iter()
                .enumerate()
                .map(|(pos, e)| RecordItem {
                    pos,
                    beta_u: PriorWeight::from_count(stats.n_u[e.student as usize]).beta,
                    beta_q: PriorWeight::from_count(stats.n_q[e.question as usize]).beta,
                    noise: RecordNoise::draw(&mut rng, draws, dims.d),
                })
                .collect(),
        })
        .collect();
    let shell = model.clone();
    let obj = tc.objective();
    let opts = GradCheckOptions { corrupt, only: Vec::new() };
    let rep = gradient_check(&mut model.store, GRADCHECK_TOL, &opts, |g| {
        batch_objective(g, &shell, &enc, &obj, &batches).map(|r| r.0)
    })?;

    println!("{:<36} {:<11} {:>8} {:>12}", "parameter", "group", "entries", "max rel err");
    for p in &rep.params {
        println!("{:<36} {:<11} {:>8} {:>12.3e}", p.name, param_group(&p.name), p.entries, p.max_rel_err);
    }
    let mut groups: Vec<(&str, f64)> = Vec::new();
    for p in &rep.params {
        let g = param_group(&p.name);
        match groups.iter_mut().find(|x| x.0 == g) {
            Some(x) => x.1 = x.1.max(p.max_rel_err),
            None => groups.push((g, p.max_rel_err)),
        }
    }
    for (g, e) in &groups {
        println!("group {g:<11} max rel err {e:.3e}");
    }
    println!("max relative error {:.3e} (tolerance {:.0e}): {}", rep.max_rel_err, rep.tol, if rep.passed { "PASS" } else { "FAIL" });
    if !rep.passed {
        let worst = rep.worst().map_or("?".to_string(), |w| w.name.clone());
        return Err(CliError::Numeric(format!("gradient check failed, worst parameter `{worst}`")));
    }
    Ok(rep)
}
