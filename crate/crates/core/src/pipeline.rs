//! File-mediated pipeline stages. Every stage reads only the sequence
//! directory and artifacts written by earlier stages, never in-memory state,
//! so any stage can be rerun in isolation and two runs over identical inputs
//! produce byte-identical artifacts.
//!
//! Stage artifacts, all under the configured output directory:
//!   track     tracks.csv          confirmed world-frame track states
//!   describe  descriptors.jsonl   per (track, frame) motion descriptors
//!   caption   captions.jsonl      per track, on its caption refresh frames
//!   match     scores.csv          per (query, frame, track) scores
//!   select    results/<qid>.csv   matched boxes projected to the image
//!             report.json         per-query selection reports
//!   eval      gt/<qid>.csv        ground-truth boxes projected the same way
//!             eval.csv, eval.txt  per-query and mean metrics

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::caption::{
    caption_template, parse_caption_records, prompt_hash, write_caption_records, CaptionRecord,
    CaptionRequest, CaptionSource, HintTable, PromptTemplate, RemoteCaptioner,
};
use crate::config::{CaptionMode, EncoderKind, PipelineConfig};
use crate::descriptor::{compute_descriptor, serialize_descriptor, MotionDescriptor};
use crate::error::{Error, Result};
use crate::eval::{evaluate_suite, EvalInput, SuiteSummary};
use crate::geometry::{project_box, Box3D, Rect2D};
use crate::ingest::{
    load_bundle, parse_gt_boxes, parse_result_rows, parse_track_rows, write_result_rows,
    write_track_rows, Detection3D, ResultRow, SequenceBundle, TrackRow,
};
use crate::matching::{total_score, MatchScore, OfflineEncoder, RemoteEncoder, TextEncoder};
use crate::render::annotate_frame;
use crate::select::{select, Label, ScoredDetection, SelectionReport};
use crate::tracker::Tracker;

/// Canonical locations of every stage artifact under one output directory.
#[derive(Debug, Clone)]
pub struct StagePaths {
    pub output_dir: PathBuf,
}

impl StagePaths {
    pub fn new(cfg: &PipelineConfig) -> StagePaths {
        StagePaths {
            output_dir: cfg.paths.output_dir.clone(),
        }
    }

    pub fn tracks(&self) -> PathBuf {
        self.output_dir.join("tracks.csv")
    }
    pub fn descriptors(&self) -> PathBuf {
        self.output_dir.join("descriptors.jsonl")
    }
    pub fn captions(&self) -> PathBuf {
        self.output_dir.join("captions.jsonl")
    }
    pub fn scores(&self) -> PathBuf {
        self.output_dir.join("scores.csv")
    }
    pub fn results_dir(&self) -> PathBuf {
        self.output_dir.join("results")
    }
    pub fn result_file(&self, query_id: &str) -> PathBuf {
        self.results_dir()
            .join(format!("{}.csv", sanitize_component(query_id)))
    }
    pub fn report(&self) -> PathBuf {
        self.output_dir.join("report.json")
    }
    pub fn gt_dir(&self) -> PathBuf {
        self.output_dir.join("gt")
    }
    pub fn gt_file(&self, query_id: &str) -> PathBuf {
        self.gt_dir()
            .join(format!("{}.csv", sanitize_component(query_id)))
    }
    pub fn eval_csv(&self) -> PathBuf {
        self.output_dir.join("eval.csv")
    }
    pub fn eval_txt(&self) -> PathBuf {
        self.output_dir.join("eval.txt")
    }
    pub fn config_snapshot(&self) -> PathBuf {
        self.output_dir.join("config.toml")
    }
    pub fn render_dir(&self, query_id: &str) -> PathBuf {
        self.output_dir
            .join("render")
            .join(sanitize_component(query_id))
    }
}

/// Make an identifier safe to use as a file name component.
pub fn sanitize_component(raw: &str) -> String {
    let cleaned: String = raw
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if cleaned.is_empty() {
        "_".into()
    } else {
        cleaned
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// descriptors.jsonl

/// One descriptor artifact line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorRecord {
    pub track_id: u64,
    pub frame: u64,
    pub text: String,
    pub descriptor: MotionDescriptor,
}

pub fn parse_descriptor_records(path: &Path) -> Result<Vec<DescriptorRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DescriptorRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_descriptor_records(path: &Path, records: &[DescriptorRecord]) -> Result<()> {
    let mut sorted: Vec<&DescriptorRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.track_id, r.frame));
    let mut out = String::new();
    for rec in sorted {
        out.push_str(&serde_json::to_string(rec).expect("descriptor record"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// scores.csv

pub const SCORE_HEADER: &str = "query_id,frame,track_id,s_fuzzy,s_embed,s_total";

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub query_id: String,
    pub frame: u64,
    pub track_id: u64,
    pub s_fuzzy: f64,
    pub s_embed: f64,
    pub s_total: f64,
}

pub fn parse_score_rows(path: &Path) -> Result<Vec<ScoreRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == SCORE_HEADER => {}
        Some((_, other)) => {
            return Err(Error::parse(
                path,
                1,
                format!("expected header {SCORE_HEADER:?}, found {other:?}"),
            ))
        }
        None => return Err(Error::parse(path, 1, "empty score file")),
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                path,
                i + 1,
                format!("expected 6 fields, found {}", fields.len()),
            ));
        }
        let frame: u64 = fields[1]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad frame {:?}", fields[1])))?;
        let track_id: u64 = fields[2]
            .parse()
            .map_err(|_| Error::parse(path, i + 1, format!("bad track_id {:?}", fields[2])))?;
        let mut nums = [0.0f64; 3];
        for (slot, raw) in nums.iter_mut().zip(&fields[3..6]) {
            *slot = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(path, i + 1, format!("bad score {raw:?}")))?;
        }
        out.push(ScoreRow {
            query_id: fields[0].to_string(),
            frame,
            track_id,
            s_fuzzy: nums[0],
            s_embed: nums[1],
            s_total: nums[2],
        });
    }
    Ok(out)
}

pub fn serialize_score_rows(rows: &[ScoreRow]) -> String {
    let mut out = String::from(SCORE_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.query_id, r.frame, r.track_id, r.s_fuzzy, r.s_embed, r.s_total
        ));
    }
    out
}

pub fn write_score_rows(path: &Path, rows: &[ScoreRow]) -> Result<()> {
    std::fs::write(path, serialize_score_rows(rows)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// stages

/// Run the tracker over the sequence and persist every confirmed track state
/// in the world frame. When a track first confirms, its tentative prefix is
/// backfilled from the track history: in a batch run those states are now
/// known to belong to a real object, and descriptors computed near the track
/// start need them. Returns the number of rows written.
pub fn stage_track(cfg: &PipelineConfig) -> Result<usize> {
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    let paths = StagePaths::new(cfg);
    ensure_dir(&paths.output_dir)?;

    let mut tracker = Tracker::new(cfg.tracker.clone());
    for &frame in &bundle.frames {
        let pose = bundle.pose(frame);
        let world: Vec<Detection3D> = bundle
            .detections_for_frame(frame)
            .into_iter()
            .map(|d| Detection3D {
                frame: d.frame,
                class: d.class.clone(),
                box3d: d.box3d.to_world(&pose),
                score: d.score,
            })
            .collect();
        tracker
            .step(frame, &world)
            .map_err(|e| Error::stage("track", e.to_string()))?;
    }

    // A batch run reports whole trajectories, not the live filter output:
    // every frame of a track that was ever confirmed (its tentative prefix is
    // vouched for by the later confirmation), trimmed and optionally smoothed
    // by Track::trajectory.
    let mut rows: Vec<TrackRow> = Vec::new();
    for t in tracker.tracks() {
        if !t.ever_confirmed() {
            continue;
        }
        let noise = *cfg.tracker.noise_for(&t.class);
        for (frame, box_world, confidence) in t.trajectory(&noise, cfg.tracker.smooth) {
            rows.push(TrackRow {
                frame,
                track_id: t.id,
                class: t.class.clone(),
                box3d: box_world,
                score: confidence,
            });
        }
    }
    rows.sort_by_key(|r| (r.frame, r.track_id));
    write_track_rows(&paths.tracks(), &rows)?;
    Ok(rows.len())
}

fn tracks_by_id(rows: &[TrackRow]) -> BTreeMap<u64, Vec<(u64, Box3D)>> {
    let mut by_id: BTreeMap<u64, Vec<(u64, Box3D)>> = BTreeMap::new();
    for r in rows {
        by_id.entry(r.track_id).or_default().push((r.frame, r.box3d));
    }
    for history in by_id.values_mut() {
        history.sort_by_key(|(f, _)| *f);
    }
    by_id
}

/// Compute a motion descriptor for every (track, frame) in tracks.csv.
pub fn stage_describe(cfg: &PipelineConfig) -> Result<usize> {
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    let paths = StagePaths::new(cfg);
    let rows = parse_track_rows(&paths.tracks())?;

    let mut records = Vec::new();
    for (track_id, history) in tracks_by_id(&rows) {
        for &(frame, _) in &history {
            let pose = bundle.pose(frame);
            let d = compute_descriptor(&history, &pose, frame, cfg.descriptor.window)
                .map_err(|e| Error::stage("describe", e.to_string()))?;
            records.push(DescriptorRecord {
                track_id,
                frame,
                text: serialize_descriptor(&d),
                descriptor: d,
            });
        }
    }
    write_descriptor_records(&paths.descriptors(), &records)?;
    Ok(records.len())
}

/// A track's caption refresh frames: every `throttle` frames starting at its
/// second tracked frame, the first with measurable motion (the descriptor at
/// the very first frame is a single sample and always reads as stationary).
/// Single-frame tracks caption that one frame. Captions between refreshes are
/// carried forward at match time; frames before the first refresh borrow it
/// backwards.
fn is_refresh_frame(frame: u64, first_frame: u64, last_frame: u64, throttle: u64) -> bool {
    let anchor = if last_frame > first_frame {
        first_frame + 1
    } else {
        first_frame
    };
    frame >= anchor && (frame - anchor).is_multiple_of(throttle.max(1))
}

const CROP_PAD_PX: f64 = 8.0;

/// Crop the projected box (plus padding) out of the frame image and encode it
/// as PNG, for the remote captioner's visual context.
fn crop_png(img: &image::RgbImage, rect: &Rect2D) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x0 = (rect.x_min - CROP_PAD_PX).floor().clamp(0.0, w - 1.0);
    let y0 = (rect.y_min - CROP_PAD_PX).floor().clamp(0.0, h - 1.0);
    let x1 = (rect.x_max + CROP_PAD_PX).ceil().clamp(x0 + 1.0, w);
    let y1 = (rect.y_max + CROP_PAD_PX).ceil().clamp(y0 + 1.0, h);
    let crop = image::imageops::crop_imm(
        img,
        x0 as u32,
        y0 as u32,
        (x1 - x0) as u32,
        (y1 - y0) as u32,
    )
    .to_image();
    let mut bytes = Vec::new();
    image::DynamicImage::ImageRgb8(crop)
        .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::stage("caption", format!("encoding crop: {e}")))?;
    Ok(bytes)
}

/// Caption each track on its refresh frames, via the deterministic template
/// or the remote model depending on configuration.
pub fn stage_caption(cfg: &PipelineConfig) -> Result<usize> {
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    let paths = StagePaths::new(cfg);
    let descriptors = parse_descriptor_records(&paths.descriptors())?;
    let track_rows = parse_track_rows(&paths.tracks())?;

    // (track, frame) -> (class, world box) for hint joins and image crops.
    let mut info: BTreeMap<(u64, u64), (&str, &Box3D)> = BTreeMap::new();
    let mut span: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for r in &track_rows {
        info.insert((r.track_id, r.frame), (r.class.as_str(), &r.box3d));
        span.entry(r.track_id)
            .and_modify(|(lo, hi)| {
                *lo = (*lo).min(r.frame);
                *hi = (*hi).max(r.frame);
            })
            .or_insert((r.frame, r.frame));
    }

    let throttle = cfg.captioner.throttle_frames;
    let due: Vec<&DescriptorRecord> = descriptors
        .iter()
        .filter(|rec| {
            span.get(&rec.track_id)
                .is_some_and(|&(lo, hi)| is_refresh_frame(rec.frame, lo, hi, throttle))
        })
        .collect();

    let mut records = Vec::with_capacity(due.len());
    match cfg.captioner.mode {
        CaptionMode::Template => {
            let hints_path = cfg.paths.sequence_dir.join("hints.csv");
            let hints = if hints_path.exists() {
                HintTable::parse(&hints_path)?
            } else {
                HintTable::default()
            };
            let thresholds = cfg.captioner.thresholds();
            for rec in due {
                let (class, box_world) = *info.get(&(rec.track_id, rec.frame)).ok_or_else(|| {
                    Error::stage(
                        "caption",
                        format!(
                            "descriptor for track {} frame {} has no track row",
                            rec.track_id, rec.frame
                        ),
                    )
                })?;
                let hint = hints.lookup(rec.frame, box_world.center.x, box_world.center.y);
                let text = caption_template(&rec.descriptor, class, hint, &thresholds);
                let key = prompt_hash("template", class, &rec.text, None);
                records.push(CaptionRecord {
                    sequence_id: bundle.sequence_id.clone(),
                    track_id: rec.track_id,
                    frame: rec.frame,
                    text,
                    source: CaptionSource::Template,
                    model_id: "template".into(),
                    prompt_hash: key,
                });
            }
        }
        CaptionMode::Remote => {
            let endpoint = cfg.captioner.remote_endpoint();
            endpoint.validate()?;
            let template = match &cfg.captioner.prompt_template_path {
                Some(p) => PromptTemplate::from_file(p)?,
                None => PromptTemplate::default(),
            };
            let cache = cfg
                .cache_dir()
                .join(format!("captions-{}.jsonl", sanitize_component(&endpoint.model)));
            ensure_dir(&cfg.cache_dir())?;
            let captioner =
                RemoteCaptioner::new(endpoint, template, Some(cache), cfg.captioner.concurrency)?;

            // Frame images are decoded at most once each.
            let mut frames: BTreeMap<u64, image::RgbImage> = BTreeMap::new();
            let mut requests = Vec::with_capacity(due.len());
            for rec in &due {
                let (class, box_world) = *info.get(&(rec.track_id, rec.frame)).ok_or_else(|| {
                    Error::stage(
                        "caption",
                        format!(
                            "descriptor for track {} frame {} has no track row",
                            rec.track_id, rec.frame
                        ),
                    )
                })?;
                let mut image_png = None;
                if let (Some(img_path), Some(cam)) =
                    (bundle.image_paths.get(&rec.frame), &bundle.camera)
                {
                    if let std::collections::btree_map::Entry::Vacant(slot) =
                        frames.entry(rec.frame)
                    {
                        let img = image::open(img_path)
                            .map_err(|e| {
                                Error::stage(
                                    "caption",
                                    format!("reading {}: {e}", img_path.display()),
                                )
                            })?
                            .to_rgb8();
                        slot.insert(img);
                    }
                    let ego_box = box_world.to_ego(&bundle.pose(rec.frame));
                    if let Some(rect) = project_box(&ego_box, cam) {
                        image_png = Some(crop_png(&frames[&rec.frame], &rect)?);
                    }
                }
                requests.push(CaptionRequest {
                    class: class.to_string(),
                    descriptor_text: rec.text.clone(),
                    window: rec.descriptor.window_used,
                    image_png,
                });
            }
            let outputs = captioner.caption_all(&requests)?;
            captioner.flush_cache()?;
            for (rec, (text, key)) in due.iter().zip(outputs) {
                records.push(CaptionRecord {
                    sequence_id: bundle.sequence_id.clone(),
                    track_id: rec.track_id,
                    frame: rec.frame,
                    text,
                    source: CaptionSource::Remote,
                    model_id: cfg.captioner.model.clone(),
                    prompt_hash: key,
                });
            }
        }
    }
    write_caption_records(&paths.captions(), &records)?;
    Ok(records.len())
}

enum EncoderHandle {
    Offline(OfflineEncoder),
    Remote(RemoteEncoder),
}

impl EncoderHandle {
    fn as_dyn(&self) -> &dyn TextEncoder {
        match self {
            EncoderHandle::Offline(e) => e,
            EncoderHandle::Remote(e) => e,
        }
    }

    fn flush(&self) -> Result<()> {
        match self {
            EncoderHandle::Offline(_) => Ok(()),
            EncoderHandle::Remote(e) => e.flush(),
        }
    }
}

fn build_encoder(cfg: &PipelineConfig) -> Result<EncoderHandle> {
    match cfg.matcher.encoder {
        EncoderKind::Offline => Ok(EncoderHandle::Offline(OfflineEncoder {
            dim: cfg.matcher.hash_dim,
            seed: cfg.matcher.hash_seed,
        })),
        EncoderKind::Remote => {
            let endpoint = cfg.matcher.remote_endpoint();
            endpoint.validate()?;
            let cache = cfg
                .cache_dir()
                .join(format!(
                    "embeddings-{}.jsonl",
                    sanitize_component(&endpoint.model)
                ));
            ensure_dir(&cfg.cache_dir())?;
            Ok(EncoderHandle::Remote(RemoteEncoder::new(
                endpoint,
                Some(cache),
            )?))
        }
    }
}

/// Score every (query, frame, track) triple against the caption in effect at
/// that frame: the track's latest caption at or before it.
pub fn stage_match(cfg: &PipelineConfig) -> Result<usize> {
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    if bundle.queries.is_empty() {
        return Err(Error::stage("match", "sequence has no queries"));
    }
    let paths = StagePaths::new(cfg);
    let track_rows = parse_track_rows(&paths.tracks())?;
    let captions = parse_caption_records(&paths.captions())?;

    let mut caption_by_track: BTreeMap<u64, Vec<(u64, &str)>> = BTreeMap::new();
    for c in &captions {
        caption_by_track
            .entry(c.track_id)
            .or_default()
            .push((c.frame, c.text.as_str()));
    }
    for list in caption_by_track.values_mut() {
        list.sort_by_key(|(f, _)| *f);
    }

    let encoder = build_encoder(cfg)?;
    let weights = cfg.matcher.weights();
    // Caption texts repeat across carried-forward frames; score each distinct
    // (query, caption) pair once.
    let mut memo: BTreeMap<(usize, String), MatchScore> = BTreeMap::new();
    let mut rows: Vec<ScoreRow> = Vec::new();
    for (qi, query) in bundle.queries.iter().enumerate() {
        for tr in &track_rows {
            let list = caption_by_track.get(&tr.track_id).ok_or_else(|| {
                Error::stage(
                    "match",
                    format!("track {} has no captions; rerun the caption stage", tr.track_id),
                )
            })?;
            // Latest caption at or before the frame; frames before the first
            // refresh borrow the first caption backwards.
            let at = list.partition_point(|(f, _)| *f <= tr.frame);
            let text = list[at.max(1) - 1].1;
            let score = match memo.get(&(qi, text.to_string())) {
                Some(s) => *s,
                None => {
                    let s = total_score(&query.text, text, encoder.as_dyn(), &weights)?;
                    memo.insert((qi, text.to_string()), s);
                    s
                }
            };
            rows.push(ScoreRow {
                query_id: query.id.clone(),
                frame: tr.frame,
                track_id: tr.track_id,
                s_fuzzy: score.s_fuzzy,
                s_embed: score.s_embed,
                s_total: score.s_total,
            });
        }
    }
    encoder.flush()?;
    rows.sort_by(|a, b| {
        (&a.query_id, a.frame, a.track_id).cmp(&(&b.query_id, b.frame, b.track_id))
    });
    write_score_rows(&paths.scores(), &rows)?;
    Ok(rows.len())
}

/// Project a world-frame box into the image at a frame, if visible.
fn project_world_box(
    bundle: &SequenceBundle,
    box_world: &Box3D,
    frame: u64,
) -> Result<Option<Rect2D>> {
    let cam = bundle.camera.as_ref().ok_or_else(|| {
        Error::stage("select", "sequence has no calib.txt; cannot project boxes")
    })?;
    let ego = box_world.to_ego(&bundle.pose(frame));
    Ok(project_box(&ego, cam))
}

/// Partition each query's scores into matched and unmatched, and persist the
/// matched detections as image-plane boxes plus a per-query report.
pub fn stage_select(cfg: &PipelineConfig) -> Result<BTreeMap<String, SelectionReport>> {
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    let paths = StagePaths::new(cfg);
    let scores = parse_score_rows(&paths.scores())?;
    let track_rows = parse_track_rows(&paths.tracks())?;
    ensure_dir(&paths.results_dir())?;

    let mut boxes: BTreeMap<(u64, u64), &Box3D> = BTreeMap::new();
    for r in &track_rows {
        boxes.insert((r.frame, r.track_id), &r.box3d);
    }

    let mut by_query: BTreeMap<&str, Vec<&ScoreRow>> = BTreeMap::new();
    for s in &scores {
        by_query.entry(s.query_id.as_str()).or_default().push(s);
    }

    let mut reports = BTreeMap::new();
    for (query_id, rows) in by_query {
        let dets: Vec<ScoredDetection> = rows
            .iter()
            .map(|r| ScoredDetection {
                track_id: r.track_id,
                frame: r.frame,
                score: r.s_total,
            })
            .collect();
        let (labels, report) = select(&dets, &cfg.selection)?;
        let mut out_rows = Vec::new();
        for (det, label) in dets.iter().zip(&labels) {
            if *label != Label::Matched {
                continue;
            }
            let box_world = boxes.get(&(det.frame, det.track_id)).ok_or_else(|| {
                Error::stage(
                    "select",
                    format!(
                        "score row for track {} frame {} has no track row",
                        det.track_id, det.frame
                    ),
                )
            })?;
            if let Some(rect) = project_world_box(&bundle, box_world, det.frame)? {
                out_rows.push(ResultRow {
                    query_id: query_id.to_string(),
                    frame: det.frame,
                    track_id: det.track_id,
                    rect,
                });
            }
        }
        out_rows.sort_by_key(|r| (r.frame, r.track_id));
        write_result_rows(&paths.result_file(query_id), &out_rows)?;
        reports.insert(query_id.to_string(), report);
    }

    let json = serde_json::to_string_pretty(&reports).expect("selection reports");
    std::fs::write(paths.report(), json + "\n").map_err(|e| Error::io(paths.report(), e))?;
    Ok(reports)
}

fn format_eval_line(label: &str, r: [f64; 8]) -> String {
    format!(
        "{label},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
        r[0], r[1], r[2], r[3], r[4], r[5], r[6], r[7]
    )
}

pub const EVAL_HEADER: &str = "query_id,hota,det_a,det_re,det_pr,ass_a,ass_re,ass_pr,loc_a";

/// Compare results/<qid>.csv against projected ground truth for every query
/// that has ground-truth annotations.
pub fn stage_eval(cfg: &PipelineConfig) -> Result<SuiteSummary> {
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    let paths = StagePaths::new(cfg);
    let gt_path = cfg.paths.sequence_dir.join("gt_boxes.csv");
    if !gt_path.exists() {
        return Err(Error::stage(
            "eval",
            format!("{} not found", gt_path.display()),
        ));
    }
    let gt_rows = parse_gt_boxes(&gt_path)?;
    let mut gt_boxes: BTreeMap<(u64, u64), &Box3D> = BTreeMap::new();
    for r in &gt_rows {
        gt_boxes.insert((r.frame, r.object_id), &r.box3d);
    }
    ensure_dir(&paths.gt_dir())?;

    let mut inputs: BTreeMap<String, EvalInput> = BTreeMap::new();
    for query in &bundle.queries {
        if query.gt.is_empty() {
            continue;
        }
        let mut gt_triples = Vec::new();
        let mut gt_out = Vec::new();
        for (&frame, ids) in &query.gt {
            for &id in ids {
                let box_world = gt_boxes.get(&(frame, id)).ok_or_else(|| {
                    Error::stage(
                        "eval",
                        format!("query {} names object {id} at frame {frame} but gt_boxes.csv has no such row", query.id),
                    )
                })?;
                if let Some(rect) = project_world_box(&bundle, box_world, frame)? {
                    gt_triples.push((frame, id, rect));
                    gt_out.push(ResultRow {
                        query_id: query.id.clone(),
                        frame,
                        track_id: id,
                        rect,
                    });
                }
            }
        }
        gt_out.sort_by_key(|r| (r.frame, r.track_id));
        write_result_rows(&paths.gt_file(&query.id), &gt_out)?;

        let result_path = paths.result_file(&query.id);
        if !result_path.exists() {
            return Err(Error::stage(
                "eval",
                format!(
                    "{} not found; run the select stage first",
                    result_path.display()
                ),
            ));
        }
        let pred: Vec<(u64, u64, Rect2D)> = parse_result_rows(&result_path)?
            .into_iter()
            .map(|r| (r.frame, r.track_id, r.rect))
            .collect();
        inputs.insert(
            query.id.clone(),
            EvalInput {
                gt: gt_triples,
                pred,
            },
        );
    }
    if inputs.is_empty() {
        return Err(Error::stage(
            "eval",
            "no query carries ground-truth annotations",
        ));
    }

    let suite = evaluate_suite(&inputs)?;

    let mut csv = String::from(EVAL_HEADER);
    csv.push('\n');
    let mut txt = format!(
        "{:<12} {:>8} {:>8} {:>8} {:>8}\n",
        "query", "hota", "det_a", "ass_a", "loc_a"
    );
    let mut sums = [0.0f64; 8];
    for (qid, r) in &suite.per_query {
        let cols = [
            r.hota, r.det_a, r.det_re, r.det_pr, r.ass_a, r.ass_re, r.ass_pr, r.loc_a,
        ];
        for (s, c) in sums.iter_mut().zip(cols) {
            *s += c;
        }
        csv.push_str(&format_eval_line(qid, cols));
        csv.push('\n');
        txt.push_str(&format!(
            "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            qid, r.hota, r.det_a, r.ass_a, r.loc_a
        ));
    }
    let n = suite.per_query.len() as f64;
    for s in sums.iter_mut() {
        *s /= n;
    }
    csv.push_str(&format_eval_line("mean", sums));
    csv.push('\n');
    txt.push_str(&format!(
        "{:<12} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
        "mean", suite.mean_hota, suite.mean_det_a, suite.mean_ass_a, suite.mean_loc_a
    ));
    std::fs::write(paths.eval_csv(), csv).map_err(|e| Error::io(paths.eval_csv(), e))?;
    std::fs::write(paths.eval_txt(), txt).map_err(|e| Error::io(paths.eval_txt(), e))?;
    Ok(suite)
}

/// Everything one full run produced.
#[derive(Debug)]
pub struct RunSummary {
    pub tracks: usize,
    pub descriptors: usize,
    pub captions: usize,
    pub scores: usize,
    pub selection: BTreeMap<String, SelectionReport>,
    pub eval: Option<SuiteSummary>,
}

/// Run every stage in order. Evaluation runs when enabled, ground-truth boxes
/// exist, and at least one query is annotated; otherwise it is skipped.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let paths = StagePaths::new(cfg);
    ensure_dir(&paths.output_dir)?;
    cfg.materialize(&paths.config_snapshot())?;

    let tracks = stage_track(cfg)?;
    let descriptors = stage_describe(cfg)?;
    let captions = stage_caption(cfg)?;
    let scores = stage_match(cfg)?;
    let selection = stage_select(cfg)?;

    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    let evaluable = cfg.eval.enabled
        && cfg.paths.sequence_dir.join("gt_boxes.csv").exists()
        && bundle.queries.iter().any(|q| !q.gt.is_empty());
    let eval = if evaluable { Some(stage_eval(cfg)?) } else { None };

    Ok(RunSummary {
        tracks,
        descriptors,
        captions,
        scores,
        selection,
        eval,
    })
}

/// Draw each query's matched boxes onto the sequence's frame images. Returns
/// (frames written, frames skipped for want of an image).
pub fn render_results(cfg: &PipelineConfig, only_query: Option<&str>) -> Result<(usize, usize)> {
    let bundle = load_bundle(&cfg.paths.sequence_dir)?;
    let paths = StagePaths::new(cfg);
    let mut written = 0usize;
    let mut skipped = 0usize;
    for query in &bundle.queries {
        if only_query.is_some_and(|q| q != query.id) {
            continue;
        }
        let result_path = paths.result_file(&query.id);
        if !result_path.exists() {
            return Err(Error::stage(
                "render",
                format!(
                    "{} not found; run the select stage first",
                    result_path.display()
                ),
            ));
        }
        let rows = parse_result_rows(&result_path)?;
        let mut by_frame: BTreeMap<u64, Vec<(u64, Rect2D)>> = BTreeMap::new();
        for r in rows {
            by_frame.entry(r.frame).or_default().push((r.track_id, r.rect));
        }
        let out_dir = paths.render_dir(&query.id);
        ensure_dir(&out_dir)?;
        for (frame, boxes) in by_frame {
            let Some(img_path) = bundle.image_paths.get(&frame) else {
                skipped += 1;
                continue;
            };
            let mut img = image::open(img_path)
                .map_err(|e| {
                    Error::stage("render", format!("reading {}: {e}", img_path.display()))
                })?
                .to_rgb8();
            annotate_frame(&mut img, &query.text, &boxes);
            let out = out_dir.join(format!("{frame:04}.png"));
            img.save(&out)
                .map_err(|e| Error::stage("render", format!("writing {}: {e}", out.display())))?;
            written += 1;
        }
    }
    Ok((written, skipped))
}
