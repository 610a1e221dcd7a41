use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use bubforge::assembler::{export, synthesize, FlowSpec};
use bubforge::bubdb::{build, load_db, save_db, BubbleDb};
use bubforge::ccarender::{make_corpus, CorpusRanges};
use bubforge::features::{extract_features, segment_bubble, Component};
use bubforge::gan::{evaluate_conditioning, grad_check, load_model, save_model, sweep_points, train, GanConfig};
use bubforge::imgproc::{read_pbm, read_pgm};
use bubforge::patchpipe::{build_training_set, PipelineConfig};
use bubforge::GanModel;

use crate::{Cli, Command, Usage};

/// Largest relative gradient error `gradcheck` accepts.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn run(cli: &Cli) -> Result<()> {
    let out = match &cli.command {
        Command::Corpus(a) => corpus(a)?,
        Command::Extract(a) => extract(a)?,
        Command::Train(a) => train_cmd(a)?,
        Command::Gendb(a) => gendb(a)?,
        Command::Synth(a) => synth(a)?,
        Command::Eval(a) => eval(a)?,
        Command::Features(a) => features(a)?,
        Command::Gradcheck(a) => return gradcheck(a, cli.json),
    };
    emit(&out, cli.json);
    Ok(())
}

/// A result to print: a JSON document and its one-line text rendering.
struct Output {
    json: Value,
    text: String,
}

fn emit(out: &Output, json: bool) {
    if json {
        println!("{}", serde_json::to_string_pretty(&out.json).expect("serializable"));
    } else {
        println!("{}", out.text);
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

fn corpus(a: &crate::CorpusArgs) -> Result<Output> {
    let ranges = match &a.ranges {
        Some(p) => read_json(p)?,
        None => CorpusRanges::default(),
    };
    let records = make_corpus(a.n, a.seed, &ranges, a.side)?;
    let db = BubbleDb::new(records, true)?;
    save_db(&db, &a.out)?;
    Ok(Output {
        json: json!({"out": a.out, "records": db.len(), "side": db.side(), "seed": a.seed}),
        text: format!("wrote {} corpus records ({} px) to {} (seed {})", db.len(), db.side(), a.out.display(), a.seed),
    })
}

fn extract(a: &crate::ExtractArgs) -> Result<Output> {
    let mut cfg: PipelineConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = a.side {
        cfg.record_side = s;
    }
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.images)
        .with_context(|| format!("listing {}", a.images.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Usage(format!("no .pgm images in {}", a.images.display())).into());
    }
    let images = paths.iter().map(read_pgm).collect::<bubforge::Result<Vec<_>>>()?;
    let records = build_training_set(&images, &cfg);
    let db = BubbleDb::new(records, true)?;
    save_db(&db, &a.out)?;
    Ok(Output {
        json: json!({"out": a.out, "images": images.len(), "records": db.len(), "side": cfg.record_side}),
        text: format!("extracted {} records from {} images into {}", db.len(), images.len(), a.out.display()),
    })
}

fn train_cmd(a: &crate::TrainArgs) -> Result<Output> {
    let mut cfg: GanConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GanConfig::default(),
    };
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.lr {
        cfg.lr = v;
    }
    let corpus = load_db(&a.corpus)?;
    let trained = train::<f32>(corpus.records(), &cfg)?;
    save_model(&trained.model, &a.out)?;
    let last = trained.history.last();
    Ok(Output {
        json: json!({"out": a.out, "seed": cfg.seed, "epochs": cfg.epochs, "history": trained.history}),
        text: match last {
            Some(h) => format!(
                "trained {} epochs (seed {}): d_loss {:.4}, g_loss {:.4}; wrote {}",
                cfg.epochs,
                cfg.seed,
                h.d_loss,
                h.g_loss,
                a.out.display()
            ),
            None => format!("wrote untrained model (seed {}) to {}", cfg.seed, a.out.display()),
        },
    })
}

fn gendb(a: &crate::GendbArgs) -> Result<Output> {
    let model: GanModel = load_model(&a.model)?;
    let pool = load_db(&a.pool)?.features();
    let (db, stats) = build(&model, a.n, &pool, a.seed)?;
    save_db(&db, &a.out)?;
    Ok(Output {
        json: json!({"out": a.out, "records": db.len(), "attempts": stats.attempts, "seed": a.seed}),
        text: format!(
            "wrote {} records to {} ({} attempts, seed {})",
            db.len(),
            a.out.display(),
            stats.attempts,
            a.seed
        ),
    })
}

fn synth(a: &crate::SynthArgs) -> Result<Output> {
    let mut spec: FlowSpec = read_json(&a.flow)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.bubbles {
        spec.count = Some(n);
    }
    spec.validate()?;
    let db = load_db(&a.db)?;
    let scenes: Vec<(PathBuf, u64, usize)> = (0..a.count)
        .into_par_iter()
        .map(|i| {
            let spec = FlowSpec {
                seed: spec.seed.wrapping_add(i as u64),
                ..spec.clone()
            };
            let scene = synthesize(&spec, &db)?;
            let dir = a.out.join(format!("scene_{i:03}"));
            export(&scene, &dir)?;
            Ok((dir, spec.seed, scene.labels.count()))
        })
        .collect::<bubforge::Result<_>>()?;
    let listing: Vec<Value> = scenes
        .iter()
        .map(|(d, s, n)| json!({"dir": d, "seed": s, "bubbles": n}))
        .collect();
    let total: usize = scenes.iter().map(|s| s.2).sum();
    Ok(Output {
        json: json!({"out": a.out, "seed": spec.seed, "scenes": listing}),
        text: format!(
            "wrote {} scenes with {total} bubbles to {} (seed {})",
            scenes.len(),
            a.out.display(),
            spec.seed
        ),
    })
}

fn eval(a: &crate::EvalArgs) -> Result<Output> {
    let c: Component = a.sweep.parse().map_err(|e: bubforge::Error| Usage(e.to_string()))?;
    let model: GanModel = load_model(&a.model)?;
    let pool = load_db(&a.pool)?.features();
    let sweep = sweep_points(c, &pool, a.points)?;
    let report = evaluate_conditioning(&model, c, &sweep, a.samples, &pool, a.seed)?;
    let mut text = format!("{} sweep, seed {}\n requested   measured  usable\n", c.name(), a.seed);
    for p in &report.points {
        let m = p.measured.map_or("-".to_string(), |m| format!("{m:9.4}"));
        text += &format!("{:10.4} {:>10} {:7}\n", p.requested, m, p.usable);
    }
    text += &format!("normalized RMSE {:.4}, yield {:.3}", report.rmse, report.yield_fraction);
    Ok(Output {
        json: json!({"seed": a.seed, "report": report}),
        text,
    })
}

fn features(a: &crate::FeaturesArgs) -> Result<Output> {
    let img = read_pgm(&a.image)?;
    let mask = match &a.mask {
        Some(p) => read_pbm(p)?,
        None => segment_bubble(&img)?.mask,
    };
    let k = extract_features(&img, &mask)?;
    Ok(Output {
        json: json!({"E": k.e, "phi": k.phi, "psi": k.psi, "m": k.m}),
        text: format!("E {:.4}  phi {:.4}  psi {:.4}  m {:.4}", k.e, k.phi, k.psi, k.m),
    })
}

fn gradcheck(a: &crate::GradcheckArgs, json: bool) -> Result<()> {
    let cfg: GanConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => GanConfig::tiny(),
    };
    let r = grad_check(&cfg, a.seed)?;
    let pass = r.max_rel_error < GRADCHECK_TOLERANCE;
    emit(
        &Output {
            json: json!({"seed": a.seed, "report": r, "tolerance": GRADCHECK_TOLERANCE, "pass": pass}),
            text: format!(
                "max relative error {:.3e} at {} over {} parameters (seed {})",
                r.max_rel_error, r.worst, r.parameters, a.seed
            ),
        },
        json,
    );
    if pass {
        Ok(())
    } else {
        anyhow::bail!("gradient error {:.3e} exceeds {GRADCHECK_TOLERANCE:e}", r.max_rel_error)
    }
}
