//! Command-line front end. Each subcommand maps onto one pipeline stage (or
//! the whole pipeline), so runs can be scripted stage by stage and rerun from
//! any point. Exit codes: 0 success, 1 bad input (config or sequence files),
//! 2 stage failure.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use querytrack_core::config::{PipelineConfig, RunMode};
use querytrack_core::ingest::load_bundle;
use querytrack_core::pipeline::{
    render_results, run_pipeline, stage_caption, stage_describe, stage_eval, stage_match,
    stage_select, stage_track, StagePaths,
};
use querytrack_core::scene::{generate_scene, EgoMotion, SceneParams};

#[derive(Parser)]
#[command(
    name = "querytrack",
    version,
    about = "Track objects in 3D, describe their motion, and find the ones a text query asks for"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and sequence directory without writing anything
    Validate(StageArgs),
    /// Associate detections into tracks (writes tracks.csv)
    Track(StageArgs),
    /// Compute motion descriptors for every track state (descriptors.jsonl)
    Describe(StageArgs),
    /// Caption each track on its refresh frames (captions.jsonl)
    Caption(StageArgs),
    /// Score every query against every track state (scores.csv)
    #[command(name = "match")]
    Match(StageArgs),
    /// Split scores into matched and unmatched (results/, report.json)
    Select(StageArgs),
    /// Compare results against ground truth (eval.csv, eval.txt)
    Eval(StageArgs),
    /// Run every stage in order
    Pipeline(StageArgs),
    /// Generate a synthetic sequence with known ground truth
    GenScene(GenSceneArgs),
    /// Draw matched boxes onto the sequence's frame images
    Render(RenderArgs),
}

fn parse_mode(raw: &str) -> Result<RunMode, String> {
    raw.parse::<RunMode>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration TOML
    #[arg(long)]
    config: PathBuf,
    /// Override paths.sequence_dir from the config
    #[arg(long)]
    sequence: Option<PathBuf>,
    /// Override paths.output_dir from the config
    #[arg(long)]
    output: Option<PathBuf>,
    /// Force both captioner and matcher to one side: offline or remote
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RunMode>,
}

impl StageArgs {
    fn load(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = PipelineConfig::from_file(&self.config)?;
        if let Some(seq) = &self.sequence {
            cfg.paths.sequence_dir = seq.clone();
        }
        if let Some(out) = &self.output {
            cfg.paths.output_dir = out.clone();
        }
        if let Some(mode) = self.mode {
            cfg.apply_mode(mode);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct GenSceneArgs {
    /// Directory to write the sequence into
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    frames: u64,
    #[arg(long, default_value_t = 5)]
    objects: usize,
    /// Probability that an object's detection is dropped in a frame
    #[arg(long, default_value_t = 0.0)]
    dropout: f64,
    /// Standard deviation of detection position noise, meters
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Fraction of objects left out of every query's vocabulary
    #[arg(long, default_value_t = 0.0)]
    distractors: f64,
    #[arg(long, default_value_t = 5)]
    queries: usize,
    /// Ego speed in meters per frame; 0 keeps the observer still
    #[arg(long, default_value_t = 0.0)]
    ego_speed: f64,
    /// Also render one PNG per frame
    #[arg(long)]
    images: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Render only this query id
    #[arg(long)]
    query: Option<String>,
}

fn cmd_validate(args: &StageArgs) -> anyhow::Result<()> {
    let cfg = args.load()?;
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    println!(
        "config ok: sequence {} has {} frames, {} detections, {} queries, camera {}, {} images",
        bundle.sequence_id,
        bundle.frames.len(),
        bundle.detections.len(),
        bundle.queries.len(),
        if bundle.camera.is_some() { "yes" } else { "no" },
        bundle.image_paths.len(),
    );
    Ok(())
}

fn cmd_gen_scene(args: &GenSceneArgs) -> anyhow::Result<()> {
    let params = SceneParams {
        frames: args.frames,
        n_objects: args.objects,
        dropout: args.dropout,
        jitter_pos: args.jitter,
        distractor_rate: args.distractors,
        queries_per_scene: args.queries,
        ego: if args.ego_speed > 0.0 {
            EgoMotion::Forward {
                speed: args.ego_speed,
            }
        } else {
            EgoMotion::Static
        },
        emit_images: args.images,
    };
    let scene = generate_scene(&params, args.seed)?;
    scene.write_to_dir(&args.out)?;
    println!(
        "wrote scene to {}: {} frames, {} objects, {} queries, seed {}",
        args.out.display(),
        params.frames,
        scene.objects.len(),
        scene.queries.len(),
        args.seed,
    );
    Ok(())
}

fn cmd_eval(cfg: &PipelineConfig) -> anyhow::Result<()> {
    let suite = stage_eval(cfg)?;
    for (qid, r) in &suite.per_query {
        println!(
            "{qid}: hota {:.4}  det_a {:.4}  ass_a {:.4}  loc_a {:.4}",
            r.hota, r.det_a, r.ass_a, r.loc_a
        );
    }
    println!(
        "mean over {} queries: hota {:.4}  det_a {:.4}  ass_a {:.4}  loc_a {:.4}",
        suite.per_query.len(),
        suite.mean_hota,
        suite.mean_det_a,
        suite.mean_ass_a,
        suite.mean_loc_a
    );
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Track(args) => {
            let cfg = args.load()?;
            let n = stage_track(&cfg)?;
            println!("track: wrote {n} rows to {}", StagePaths::new(&cfg).tracks().display());
            Ok(())
        }
        Command::Describe(args) => {
            let cfg = args.load()?;
            let n = stage_describe(&cfg)?;
            println!(
                "describe: wrote {n} descriptors to {}",
                StagePaths::new(&cfg).descriptors().display()
            );
            Ok(())
        }
        Command::Caption(args) => {
            let cfg = args.load()?;
            let n = stage_caption(&cfg)?;
            println!(
                "caption: wrote {n} captions to {}",
                StagePaths::new(&cfg).captions().display()
            );
            Ok(())
        }
        Command::Match(args) => {
            let cfg = args.load()?;
            let n = stage_match(&cfg)?;
            println!(
                "match: wrote {n} scores to {}",
                StagePaths::new(&cfg).scores().display()
            );
            Ok(())
        }
        Command::Select(args) => {
            let cfg = args.load()?;
            let reports = stage_select(&cfg)?;
            for (qid, r) in &reports {
                println!(
                    "{qid}: matched {} of {} scored states across tracks {:?}",
                    r.matched, r.total, r.selected_track_ids
                );
            }
            Ok(())
        }
        Command::Eval(args) => {
            let cfg = args.load()?;
            cmd_eval(&cfg)
        }
        Command::Pipeline(args) => {
            let cfg = args.load()?;
            let summary = run_pipeline(&cfg)?;
            println!(
                "pipeline: {} track rows, {} descriptors, {} captions, {} scores",
                summary.tracks, summary.descriptors, summary.captions, summary.scores
            );
            for (qid, r) in &summary.selection {
                println!("{qid}: matched {} of {}", r.matched, r.total);
            }
            match &summary.eval {
                Some(suite) => println!(
                    "mean over {} queries: hota {:.4}  det_a {:.4}  ass_a {:.4}  loc_a {:.4}",
                    suite.per_query.len(),
                    suite.mean_hota,
                    suite.mean_det_a,
                    suite.mean_ass_a,
                    suite.mean_loc_a
                ),
                None => println!("eval skipped: disabled or no ground truth"),
            }
            Ok(())
        }
        Command::GenScene(args) => cmd_gen_scene(args),
        Command::Render(args) => {
            let cfg = args.stage.load()?;
            let (written, skipped) = render_results(&cfg, args.query.as_deref())?;
            if skipped > 0 {
                eprintln!("warning: {skipped} frames had no image and were skipped");
            }
            println!("render: wrote {written} annotated frames");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).context("command failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<querytrack_core::Error>() {
                Some(core) if core.is_input_error() => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
