use std::fs;
use std::path::{Path, PathBuf};

use dorsiflex::adaptive::{self, adjustments_csv, events_to_csv, DifficultyState};
use dorsiflex::corpus::write_corpus;
use dorsiflex::eval::{evaluate_split, ConfusionMatrix, Evaluation, ReportedMetrics};
use dorsiflex::features::{extract_all, Normalizer};
use dorsiflex::ingest::{estimate_sample_rate, read_sensor_csv, split_by_subject, Dataset};
use dorsiflex::models::knn::KnnModel;
use dorsiflex::models::{load, save, ModelArtifact};
use dorsiflex::selection::{choose_k, mrmr_select, SelectionResult};
use dorsiflex::{Label, Segment};

use crate::config::RunConfig;
use crate::{write_stage, AtStage, Command, Failure};

pub fn run(mut cfg: RunConfig, command: Command) -> Result<(), Failure> {
    let name = command.name();
    apply_overrides(&mut cfg, &command);
    write_stage("create output directory", fs::create_dir_all(&cfg.out))?;
    write_stage(
        "echo configuration",
        fs::write(cfg.out.join(format!("{name}.config.toml")), cfg.to_toml()),
    )?;
    match command {
        Command::Generate { .. } => generate(&cfg),
        Command::Select { k, .. } => select(&cfg, k),
        Command::Train { .. } => train(&cfg),
        Command::Eval { .. } => eval(&cfg),
        Command::Metrics {
            tp,
            fp,
            fn_,
            tn,
            reported,
        } => metrics(&cfg, ConfusionMatrix::new(tp, fp, fn_, tn), reported),
        Command::Detect { sensor, .. } => detect(&cfg, &sensor),
        Command::Calibrate { events } => calibrate(&cfg, &events),
        Command::Adjust {
            state,
            events,
            rom_threshold,
            speed_threshold,
        } => adjust(&cfg, &state, events.as_deref(), rom_threshold, speed_threshold),
        Command::Simulate { state, .. } => simulate(&cfg, state.as_deref()),
    }
}

/// Folds command flags into the configuration so the echoed file is the
/// one actually used.
fn apply_overrides(cfg: &mut RunConfig, command: &Command) {
    match command {
        Command::Generate { subjects, segments } => {
            if let Some(n) = subjects {
                cfg.corpus.subjects = *n;
            }
            if let Some(n) = segments {
                cfg.corpus.segments_per_subject = *n;
            }
        }
        Command::Select { manifest, k } => {
            set(&mut cfg.manifest, manifest);
            if k.is_some() {
                cfg.train.k_features = *k;
            }
        }
        Command::Train {
            manifest,
            kind,
            k,
            model,
        } => {
            set(&mut cfg.manifest, manifest);
            set(&mut cfg.model, model);
            if let Some(kind) = kind {
                cfg.train.kind = *kind;
            }
            if k.is_some() {
                cfg.train.k_features = *k;
            }
        }
        Command::Eval { manifest, model } => {
            set(&mut cfg.manifest, manifest);
            set(&mut cfg.model, model);
        }
        Command::Detect { model, .. } => set(&mut cfg.model, model),
        Command::Simulate {
            prompts,
            rom_capability,
            speed_capability,
            ..
        } => {
            if let Some(n) = prompts {
                cfg.simulate.prompts = *n;
            }
            if let Some(c) = rom_capability {
                cfg.simulate.rom_capability = *c;
            }
            if let Some(c) = speed_capability {
                cfg.simulate.speed_capability = *c;
            }
        }
        Command::Metrics { .. } | Command::Calibrate { .. } | Command::Adjust { .. } => {}
    }
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    write_stage(&format!("write {}", path.display()), fs::write(path, contents))
}

fn generate(cfg: &RunConfig) -> Result<(), Failure> {
    let dir = cfg.out.join("corpus");
    let manifest = write_corpus(&cfg.corpus, &dir).at("generate corpus")?;
    let segments = cfg.corpus.subjects * cfg.corpus.segments_per_subject;
    if segments == 0 {
        eprintln!("dorsiflex: warning: no segments requested; wrote an empty manifest");
    }
    println!(
        "wrote {} subjects, {segments} segments; manifest {}",
        if segments == 0 { 0 } else { cfg.corpus.subjects },
        manifest.display()
    );
    Ok(())
}

/// Loads the manifest and splits off the held-out subjects.
fn load_split(cfg: &RunConfig) -> Result<Dataset, Failure> {
    let path = cfg.manifest_path();
    let data = Dataset::from_manifest(&path).at("load manifest")?;
    if data.segments.is_empty() {
        return Err(Failure::Data(format!("load manifest: {} lists no segments", path.display())));
    }
    let test: Vec<String> = if cfg.test_subjects.is_empty() {
        let subjects: Vec<&str> = data.subjects().into_iter().collect();
        let n = cfg.corpus.test_subjects.min(subjects.len());
        subjects[subjects.len() - n..].iter().map(|s| s.to_string()).collect()
    } else {
        cfg.test_subjects.clone()
    };
    split_by_subject(&data, &test).at("split by subject")
}

fn select(cfg: &RunConfig, k: Option<usize>) -> Result<(), Failure> {
    let data = load_split(cfg)?;
    let train = data.train();
    let labels: Vec<Label> = train.iter().map(|s| s.label()).collect();
    let features = extract_all(train.clone()).at("extract features")?;
    let rows: Vec<Vec<f64>> = features.iter().map(|f| f.as_slice().to_vec()).collect();
    let norm = Normalizer::fit(&rows).at("normalize features")?;
    let rows = rows.iter().map(|r| norm.apply(r)).collect::<dorsiflex::Result<Vec<_>>>().at("normalize features")?;

    let selection: SelectionResult = match k {
        Some(k) => mrmr_select(&rows, &labels, k, cfg.train.scoring).at("select features")?,
        None => {
            let choice = choose_k(&rows, &labels, cfg.train.scoring, |x: &[Vec<f64>], y: &[Label]| {
                KnnModel::train(x, y, 1)
            })
            .at("choose k")?;
            let mut csv = String::from("k,loocv_accuracy\n");
            for (i, a) in choice.accuracies.iter().enumerate() {
                csv.push_str(&format!("{},{a}\n", i + 1));
            }
            write(&cfg.out.join("k_search.csv"), &csv)?;
            eprintln!("chose k = {} by leave-one-out 1-NN accuracy", choice.k);
            let mut selection = choice.selection;
            selection.ranked_indices.truncate(choice.k);
            selection.scores.truncate(choice.k);
            selection.k = choice.k;
            selection
        }
    };
    let mut csv = String::from("rank,index,name,score\n");
    for (rank, ((&i, name), score)) in selection
        .ranked_indices
        .iter()
        .zip(selection.names())
        .zip(&selection.scores)
        .enumerate()
    {
        csv.push_str(&format!("{},{i},{name},{score}\n", rank + 1));
    }
    write(&cfg.out.join("selection.csv"), &csv)?;
    write(&cfg.out.join("selected_features.txt"), &selection.to_text())?;
    print!("{}", selection.to_text());
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<(), Failure> {
    let data = load_split(cfg)?;
    let train = data.train();
    let model = ModelArtifact::train(&train, &cfg.train).at("train model")?;
    let path = cfg.model_path();
    save(&model, &path).map_err(|e| Failure::Internal(format!("save model: {e}")))?;
    println!(
        "trained {} on {} segments from {} subjects; model {}",
        model.kind().name(),
        train.len(),
        model.training_subjects.len(),
        path.display()
    );
    let names = model.selected_feature_names();
    if !names.is_empty() {
        println!("features: {}", names.join(" "));
    }
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<(), Failure> {
    let model = load(&cfg.model_path()).at("load model")?;
    let data = load_split(cfg)?;
    let evaluation = evaluate_split(&model, &data.test()).at("evaluate")?;
    report(cfg, &evaluation)
}

fn metrics(cfg: &RunConfig, cm: ConfusionMatrix, reported: Option<Vec<f64>>) -> Result<(), Failure> {
    let mut evaluation = Evaluation::from_confusion("confusion matrix", cm).at("compute metrics")?;
    if let Some(r) = reported {
        if r.len() != 4 {
            return Err(Failure::Usage(format!(
                "metrics: --reported needs accuracy,precision,recall,f_score; got {} values",
                r.len()
            )));
        }
        evaluation = evaluation.check_reported(&ReportedMetrics {
            accuracy: r[0],
            precision: r[1],
            recall: r[2],
            f_score: r[3],
        });
    }
    report(cfg, &evaluation)
}

fn report(cfg: &RunConfig, evaluation: &Evaluation) -> Result<(), Failure> {
    write(&cfg.out.join("report.txt"), &evaluation.to_text())?;
    write(&cfg.out.join("report.csv"), &evaluation.to_csv())?;
    print!("{}", evaluation.to_text());
    Ok(())
}

fn detect(cfg: &RunConfig, sensor: &Path) -> Result<(), Failure> {
    let model = load(&cfg.model_path()).at("load model")?;
    let samples = read_sensor_csv(sensor).at("read recording")?;
    let rate = estimate_sample_rate(&samples);
    let recording = Segment::new(samples, "live", Label::Other.default_class(), rate).at("read recording")?;
    let events =
        adaptive::detect_shakes(&model, &recording, cfg.detect.window_s, cfg.detect.cadence_s).at("detect shakes")?;
    let path = cfg.out.join("events.csv");
    write(&path, &events_to_csv(&events))?;
    let hits = events.iter().filter(|e| e.dorsiflexion).count();
    println!("{} windows, {hits} dorsiflexion; events {}", events.len(), path.display());
    Ok(())
}

fn save_state(cfg: &RunConfig, state: &DifficultyState) -> Result<PathBuf, Failure> {
    let path = cfg.out.join("state.toml");
    state.save(&path).map_err(|e| Failure::Internal(format!("save state: {e}")))?;
    Ok(path)
}

fn calibrate(cfg: &RunConfig, events: &Path) -> Result<(), Failure> {
    let events = adaptive::read_events(events).at("read events")?;
    let state = DifficultyState::calibrate(&events, &cfg.adaptive).at("calibrate")?;
    let path = save_state(cfg, &state)?;
    println!(
        "rom threshold {:.4}, speed threshold {:.4}; state {}",
        state.rom_threshold(),
        state.speed_threshold(),
        path.display()
    );
    Ok(())
}

fn adjust(
    cfg: &RunConfig,
    state: &Path,
    events: Option<&Path>,
    rom_threshold: Option<f64>,
    speed_threshold: Option<f64>,
) -> Result<(), Failure> {
    let mut state = DifficultyState::load(state).at("load state")?;
    for (track, value, name) in [
        (&mut state.rom, rom_threshold, "rom"),
        (&mut state.speed, speed_threshold, "speed"),
    ] {
        if let Some(v) = value {
            let b = track.bounds;
            if !(b.floor..=b.ceiling).contains(&v) {
                return Err(Failure::Usage(format!(
                    "adjust: {name} threshold {v} lies outside [{}, {}]",
                    b.floor, b.ceiling
                )));
            }
            track.threshold = v;
        }
    }
    let mut adjustments = Vec::new();
    if let Some(path) = events {
        for e in adaptive::read_events(path).at("read events")? {
            adjustments.extend(state.apply(&e).at("apply shake")?);
        }
    }
    write(&cfg.out.join("adjustments.csv"), &adjustments_csv(&adjustments))?;
    let path = save_state(cfg, &state)?;
    println!(
        "{} epochs closed; rom threshold {:.4}, speed threshold {:.4}; state {}",
        adjustments.len(),
        state.rom_threshold(),
        state.speed_threshold(),
        path.display()
    );
    Ok(())
}

fn simulate(cfg: &RunConfig, state: Option<&Path>) -> Result<(), Failure> {
    let initial = match state {
        Some(p) => DifficultyState::load(p).at("load state")?,
        None => DifficultyState::with_thresholds(cfg.simulate.rom_threshold, cfg.simulate.speed_threshold, &cfg.adaptive)
            .at("initial state")?,
    };
    let player = cfg.simulate.player(cfg.seed);
    let session = adaptive::simulate_session(&player, &initial, cfg.simulate.prompts).at("simulate")?;
    let adjustments: Vec<_> = session.steps.iter().filter_map(|s| s.adjustment).collect();
    write(&cfg.out.join("session.csv"), &session.log_csv())?;
    write(&cfg.out.join("trajectory.csv"), &adjustments_csv(&adjustments))?;
    let path = save_state(cfg, &session.final_state)?;
    println!(
        "{} prompts, {} epochs; rom threshold {:.4} -> {:.4}, speed threshold {:.4} -> {:.4}; state {}",
        session.steps.len(),
        adjustments.len(),
        initial.rom_threshold(),
        session.final_state.rom_threshold(),
        initial.speed_threshold(),
        session.final_state.speed_threshold(),
        path.display()
    );
    Ok(())
}
