use std::path::{Path, PathBuf};

use hazefield::eval::{self, Ablation, BaselineMode, EvalReport};
use hazefield::field::Camera;
use hazefield::gradcheck::run_gradcheck;
use hazefield::synth::{load_training_set, DatasetManifest, FixtureSpec, GroundTruthViews, RigSpec, SceneSpec};
use hazefield::trainer::{self, render_novel_view, Checkpoint, TrainOutput, Trainer};
use hazefield::{io, Error, Real, Result};
use serde::Serialize;

use crate::config::{stamp, Precision, RunConfig};
use crate::{AblationArgs, EvalArgs, GradcheckArgs, RenderArgs, RunOverrides, SweepArgs, SynthArgs, TrainArgs};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// Inclusive `start:stop:step` range.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| invalid(format!("range {s:?} is not start:stop:step")))?;
    let [start, stop, step] = parts[..] else {
        return Err(invalid(format!("range {s:?} is not start:stop:step")));
    };
    if !(step > 0.0 && stop >= start) {
        return Err(invalid(format!("range {s:?} needs step > 0 and stop >= start")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| ((start + k as f64 * step) * 1e9).round() / 1e9).collect())
}

fn scene_preset(name: &str) -> Result<SceneSpec> {
    match name {
        "fixture" => Ok(SceneSpec::fixture()),
        other => Err(invalid(format!("unknown scene preset {other:?}"))),
    }
}

#[derive(Serialize)]
struct SynthEcho<'a> {
    preset: &'a str,
    beta: f64,
    airlight: f64,
    fixture: &'a FixtureSpec,
}

pub fn synth(a: &SynthArgs) -> Result<u8> {
    let scene = scene_preset(&a.preset)?;
    let fixture = FixtureSpec {
        n_views: a.views,
        n_test_views: a.test_views,
        rig: RigSpec {
            width: a.res,
            height: a.res,
            focal: RigSpec::default().focal * a.res as f64 / 64.0,
            ..RigSpec::default()
        },
        levels: a.levels,
        seed: a.seed,
    };
    let betas = match &a.beta_sweep {
        Some(r) => parse_range(r)?,
        None => vec![a.beta],
    };
    for &beta in &betas {
        let dir = match &a.beta_sweep {
            Some(_) => a.out.join(format!("beta_{beta:.3}")),
            None => a.out.clone(),
        };
        let manifest = fixture.build(&scene, beta, a.airlight, &dir)?;
        let echo = SynthEcho {
            preset: &a.preset,
            beta,
            airlight: a.airlight,
            fixture: &fixture,
        };
        stamp(&dir, "synth_config.json", &echo)?;
        println!(
            "wrote {} ({} training, {} held-out views, beta {beta}, A {})",
            dir.display(),
            manifest.images.len(),
            manifest.test_images.len(),
            a.airlight
        );
    }
    Ok(0)
}

/// Config file, then flags.
fn resolve(o: &RunOverrides) -> Result<RunConfig> {
    let mut c = RunConfig::load(o.config.as_deref())?;
    if let Some(d) = &o.dataset {
        c.dataset = Some(d.clone());
    }
    if let Some(d) = &o.out {
        c.out_dir = d.clone();
    }
    if let Some(s) = o.seed {
        c.train.seed = s;
    }
    if let Some(n) = o.iterations {
        c.train.total_iterations = n;
    }
    if let Some(p) = o.precision {
        c.precision = p;
    }
    for term in &o.ablate {
        let a = Ablation::parse(term).ok_or_else(|| invalid(format!("unknown loss term {term:?}")))?;
        c.train = a.apply(&c.train);
    }
    c.train.validate()?;
    Ok(c)
}

fn dataset_of(c: &RunConfig) -> Result<PathBuf> {
    let d = c.dataset.clone().ok_or_else(|| invalid("no dataset given"))?;
    let manifest = DatasetManifest::resolve(&d);
    if !manifest.is_file() {
        return Err(Error::Io {
            path: manifest,
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset manifest not found"),
        });
    }
    Ok(d)
}

#[derive(Serialize)]
struct TrainSummary {
    iterations: u64,
    beta_mean: f64,
    a_mean: f64,
    last: Option<trainer::StepReport>,
}

fn train_typed<T: Real>(c: &RunConfig, dataset: &Path, resume: Option<&Path>) -> Result<()> {
    let data = load_training_set::<T>(dataset)?;
    let mut t = match resume {
        Some(p) => Trainer::resume(&data, Checkpoint::<T>::load(p)?)?,
        None => Trainer::new(&data, c.train.clone())?,
    };
    let reports = trainer::train(&mut t, Some(TrainOutput { dir: &c.out_dir }))?;
    let s = t.state();
    let summary = TrainSummary {
        iterations: s.iteration,
        beta_mean: s.beta_mean().to_f64_lossless(),
        a_mean: s.airlight_mean().to_f64_lossless(),
        last: reports.last().copied(),
    };
    io::write_json(&c.out_dir.join("summary.json"), &summary)?;
    println!(
        "trained {} iterations: beta {:.5}, A {:.5} -> {}",
        summary.iterations,
        summary.beta_mean,
        summary.a_mean,
        c.out_dir.join(trainer::FINAL_CHECKPOINT).display()
    );
    Ok(())
}

pub fn train(a: &TrainArgs) -> Result<u8> {
    let c = resolve(&a.run)?;
    let dataset = dataset_of(&c)?;
    stamp(&c.out_dir, "config.json", &c)?;
    match c.precision {
        Precision::F32 => train_typed::<f32>(&c, &dataset, a.resume.as_deref())?,
        Precision::F64 => train_typed::<f64>(&c, &dataset, a.resume.as_deref())?,
    }
    Ok(0)
}

fn render_cameras(a: &RenderArgs) -> Result<Vec<Camera>> {
    match (a.orbit, a.camera_index) {
        (Some(n), None) => {
            let rig = RigSpec {
                elevation_deg: [30.0, 30.0],
                width: a.res,
                height: a.res,
                focal: RigSpec::default().focal * a.res as f64 / 64.0,
                ..RigSpec::default()
            };
            hazefield::synth::generate_cameras(n, &rig, 0)
        }
        (None, Some(i)) => {
            let d = a.dataset.as_deref().ok_or_else(|| invalid("--camera-index needs --dataset"))?;
            let (m, _) = DatasetManifest::load(d)?;
            let records = if a.test { &m.test_cameras } else { &m.cameras };
            let rec = records
                .get(i)
                .ok_or_else(|| invalid(format!("camera index {i} out of range ({} cameras)", records.len())))?;
            Ok(vec![rec.to_camera(m.near, m.far)?])
        }
        _ => Err(invalid("give exactly one of --orbit or --camera-index")),
    }
}

fn render_typed<T: Real>(a: &RenderArgs, cams: &[Camera]) -> Result<Vec<String>> {
    let ck = Checkpoint::<T>::load(&a.checkpoint)?;
    let mut files = Vec::new();
    for (k, cam) in cams.iter().enumerate() {
        let idx = a.camera_index.unwrap_or(k);
        let (img, depth) = render_novel_view(&ck.state.grid, cam, ck.config.n_samples)?;
        let name = format!("view_{idx:03}.png");
        io::write_png(&a.out.join(&name), &img)?;
        files.push(name);
        if a.depth {
            let name = format!("depth_{idx:03}.pfm");
            io::write_pfm(&a.out.join(&name), &depth)?;
            files.push(name);
        }
    }
    Ok(files)
}

pub fn render(a: &RenderArgs) -> Result<u8> {
    let cams = render_cameras(a)?;
    let bits = trainer::scalar_bits(&a.checkpoint)?;
    io::ensure_dir(&a.out)?;
    let files = match bits {
        32 => render_typed::<f32>(a, &cams)?,
        64 => render_typed::<f64>(a, &cams)?,
        b => return Err(Error::Corrupt {
            path: a.checkpoint.clone(),
            reason: format!("unsupported scalar width {b}"),
        }),
    };
    #[derive(Serialize)]
    struct RenderEcho<'a> {
        checkpoint: &'a Path,
        camera_index: Option<usize>,
        test: bool,
        orbit: Option<usize>,
        res: usize,
        files: &'a [String],
    }
    let echo = RenderEcho {
        checkpoint: &a.checkpoint,
        camera_index: a.camera_index,
        test: a.test,
        orbit: a.orbit,
        res: a.res,
        files: &files,
    };
    stamp(&a.out, "render.json", &echo)?;
    println!("rendered {} files into {}", files.len(), a.out.display());
    Ok(0)
}

fn parse_modes(s: &str) -> Result<Vec<BaselineMode>> {
    if s == "all" {
        return Ok(BaselineMode::ALL.to_vec());
    }
    s.split(',')
        .map(|m| {
            BaselineMode::ALL
                .into_iter()
                .find(|b| b.name() == m.trim())
                .ok_or_else(|| invalid(format!("unknown baseline {m:?} (ours, naive, dcp, all)")))
        })
        .collect()
}

fn print_report(r: &EvalReport) {
    print!("{:<6} psnr {:.2} dB  ssim {:.4}  (hazy input {:.2} dB)", r.mode, r.psnr_mean, r.ssim_mean, r.hazy_psnr_mean);
    if let (Some(b), Some(av), Some(e)) = (r.beta_hat, r.a_hat, r.avg_rel_err) {
        print!("  beta {b:.4}  A {av:.4}  avg rel err {:.2}%", 100.0 * e);
    }
    println!();
}

fn eval_checkpoint<T: Real>(path: &Path, mode: BaselineMode, dataset: &Path) -> Result<EvalReport> {
    let gt = GroundTruthViews::load(dataset)?;
    let ck = Checkpoint::<T>::load(path)?;
    eval::evaluate_state(mode, &ck.state, ck.config.n_samples, &gt)
}

pub fn eval(a: &EvalArgs) -> Result<u8> {
    let c = resolve(&a.run)?;
    let dataset = dataset_of(&c)?;
    let modes = parse_modes(&a.baseline)?;
    stamp(&c.out_dir, "config.json", &c)?;
    let mut reports = Vec::new();
    if let Some(ck) = &a.checkpoint {
        let [mode] = modes[..] else {
            return Err(invalid("--checkpoint scores a single baseline"));
        };
        let r = match trainer::scalar_bits(ck)? {
            64 => eval_checkpoint::<f64>(ck, mode, &dataset)?,
            _ => eval_checkpoint::<f32>(ck, mode, &dataset)?,
        };
        io::write_json(&c.out_dir.join("report.json"), &r)?;
        reports.push(r);
    } else {
        for &mode in &modes {
            let dir = if modes.len() == 1 { c.out_dir.clone() } else { c.out_dir.join(mode.name()) };
            let r = match c.precision {
                Precision::F32 => eval::run_eval::<f32>(&dataset, mode, &c.train, Some(&dir))?,
                Precision::F64 => eval::run_eval::<f64>(&dataset, mode, &c.train, Some(&dir))?,
            };
            reports.push(r);
        }
        if modes.len() > 1 {
            io::write_json(&c.out_dir.join("reports.json"), &reports)?;
        }
    }
    reports.iter().for_each(print_report);
    Ok(0)
}

pub fn ablation(a: &AblationArgs) -> Result<u8> {
    let c = resolve(&a.run)?;
    let dataset = dataset_of(&c)?;
    let terms = a
        .terms
        .split(',')
        .map(|t| Ablation::parse(t.trim()).ok_or_else(|| invalid(format!("unknown loss term {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    stamp(&c.out_dir, "config.json", &c)?;
    let entries = match c.precision {
        Precision::F32 => eval::ablation_harness::<f32>(&dataset, &c.train, &terms, Some(&c.out_dir))?,
        Precision::F64 => eval::ablation_harness::<f64>(&dataset, &c.train, &terms, Some(&c.out_dir))?,
    };
    for e in &entries {
        print!("w/o {:<5} ", e.ablation.name());
        print_report(&e.report);
    }
    Ok(0)
}

pub fn sweep(a: &SweepArgs) -> Result<u8> {
    let c = resolve(&a.run)?;
    let betas = parse_range(&a.betas)?;
    let modes = parse_modes(&a.modes)?;
    stamp(&c.out_dir, "config.json", &c)?;
    let scene = SceneSpec::fixture();
    let fixture = FixtureSpec::default();
    let (curves, _) = match c.precision {
        Precision::F32 => eval::beta_sweep::<f32>(&scene, &fixture, &betas, a.airlight, &modes, &c.train, &c.out_dir)?,
        Precision::F64 => eval::beta_sweep::<f64>(&scene, &fixture, &betas, a.airlight, &modes, &c.train, &c.out_dir)?,
    };
    for (k, b) in curves.betas.iter().enumerate() {
        print!("beta {b:.3}  hazy {:.2} dB", curves.hazy_psnr[k]);
        for (m, name) in curves.modes.iter().enumerate() {
            print!("  {name} {:.2} dB", curves.psnr[m][k]);
        }
        println!();
    }
    Ok(0)
}

pub fn gradcheck(a: &GradcheckArgs) -> Result<u8> {
    let report = run_gradcheck(a.seed)?;
    print!("{}", report.table());
    if let Some(dir) = &a.out {
        stamp(dir, "gradcheck_config.json", &serde_json::json!({ "seed": a.seed }))?;
        io::write_json(&dir.join("gradcheck.json"), &report)?;
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}
