//! Track captioning. Two interchangeable backends produce a short natural
//! language phrase per track: a deterministic template captioner driven
//! entirely by the motion descriptor, and a remote multimodal model. Captions
//! are recomputed on a fixed frame cadence and carried forward in between.

pub mod cache;
pub mod remote;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::descriptor::MotionDescriptor;
use crate::error::{Error, Result};

pub use cache::TextCache;
pub use remote::{prompt_hash, CaptionRequest, RemoteCaptioner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptionSource {
    Template,
    Remote,
}

/// One caption, tied to the frame whose descriptor produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub sequence_id: String,
    pub track_id: u64,
    pub frame: u64,
    pub text: String,
    pub source: CaptionSource,
    pub model_id: String,
    pub prompt_hash: String,
}

/// Read caption records from a JSON-lines file.
pub fn parse_caption_records(path: &Path) -> Result<Vec<CaptionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(rec);
    }
    Ok(out)
}

/// Write caption records as JSON lines, sorted by (track, frame).
pub fn write_caption_records(path: &Path, records: &[CaptionRecord]) -> Result<()> {
    let mut sorted: Vec<&CaptionRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.track_id, r.frame));
    let mut out = String::new();
    for rec in sorted {
        out.push_str(&serde_json::to_string(rec).expect("caption record"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Prompt skeleton for the remote captioner. `{descriptor}`, `{class}` and
/// `{window}` are substituted per request; any other `{word}` placeholder is
/// an authoring error caught at build time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub system: String,
    pub user: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system: "You describe tracked road users for a retrieval system. Answer with one \
                     short lowercase phrase naming the object and how it is moving relative to \
                     the observer. No full sentences, no punctuation beyond commas."
                .into(),
            user: "Object class: {class}. Motion over the last {window} frames, in the \
                   observer's frame (x forward, y left, meters and radians): {descriptor}. \
                   Describe this object."
                .into(),
        }
    }
}

impl PromptTemplate {
    pub fn from_file(path: &Path) -> Result<PromptTemplate> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let template: PromptTemplate = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(template)
    }

    /// Substitute the placeholders and reject any that remain.
    pub fn build_prompt(
        &self,
        descriptor_text: &str,
        class: &str,
        window: u64,
    ) -> Result<(String, String)> {
        let fill = |raw: &str| -> Result<String> {
            let filled = raw
                .replace("{descriptor}", descriptor_text)
                .replace("{class}", class)
                .replace("{window}", &window.to_string());
            if let Some(placeholder) = find_placeholder(&filled) {
                return Err(Error::Config(format!(
                    "unresolved prompt placeholder {{{placeholder}}}"
                )));
            }
            Ok(filled)
        };
        Ok((fill(&self.system)?, fill(&self.user)?))
    }
}

/// Find a `{word}` span made of ascii alphanumerics or underscores.
fn find_placeholder(text: &str) -> Option<&str> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'{' {
            let start = i + 1;
            let mut j = start;
            while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                j += 1;
            }
            if j > start && j < bytes.len() && bytes[j] == b'}' {
                return Some(&text[start..j]);
            }
        }
        i += 1;
    }
    None
}

/// Thresholds separating the template captioner's movement words.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemplateThresholds {
    /// Meters of net displacement per window frame below which an object is
    /// considered at rest.
    pub tau_move: f64,
    /// Radians of mean per-frame heading change above which an object is
    /// described as turning.
    pub tau_turn: f64,
}

impl Default for TemplateThresholds {
    fn default() -> Self {
        TemplateThresholds {
            tau_move: 0.2,
            tau_turn: 0.02,
        }
    }
}

/// Half-angle of the cone around +x that counts as "in front of us".
const FRONT_CONE_DEG: f64 = 15.0;

/// Movement word from the descriptor alone. Turning takes precedence over
/// translation since a turning car also moves; translation splits by how much
/// of it is radial, so "approaching" and "moving away" are reserved for
/// mostly range-changing motion.
pub fn movement_phrase(
    d: &MotionDescriptor,
    class: &str,
    thresholds: &TemplateThresholds,
) -> &'static str {
    if d.delta_theta_bar.abs() >= thresholds.tau_turn {
        return "turning";
    }
    if d.d_euclid >= thresholds.tau_move * d.window_used as f64 {
        let range_end = (d.position[0].powi(2) + d.position[1].powi(2)).sqrt();
        let start = [
            d.position[0] - d.delta_p[0],
            d.position[1] - d.delta_p[1],
        ];
        let range_start = (start[0].powi(2) + start[1].powi(2)).sqrt();
        let dr = range_end - range_start;
        if dr >= 0.5 * d.d_euclid {
            return "moving away";
        }
        if dr <= -0.5 * d.d_euclid {
            return "approaching";
        }
        return "moving";
    }
    if class == "car" {
        "parked"
    } else {
        "stationary"
    }
}

/// Side word from the descriptor's position: a narrow cone straight ahead is
/// "in front of us", everything else splits by the sign of y (left positive).
pub fn side_phrase(d: &MotionDescriptor) -> &'static str {
    let x = d.position[0];
    let y = d.position[1];
    if x > 0.0 && y.abs() <= x * FRONT_CONE_DEG.to_radians().tan() {
        "in front of us"
    } else if y > 0.0 {
        "on the left"
    } else {
        "on the right"
    }
}

/// Deterministic caption: "a {hint }{class}, {movement}, {side}".
pub fn caption_template(
    d: &MotionDescriptor,
    class: &str,
    hint: Option<&str>,
    thresholds: &TemplateThresholds,
) -> String {
    let hint_part = hint.map(|h| format!("{h} ")).unwrap_or_default();
    format!(
        "a {hint_part}{class}, {}, {}",
        movement_phrase(d, class, thresholds),
        side_phrase(d)
    )
}

pub const HINT_HEADER: &str = "frame,x,y,color";
/// World-plane radius within which a hint row annotates a track.
pub const HINT_RADIUS_M: f64 = 1.0;

/// Optional per-frame appearance hints (color words keyed by world position).
/// Detections are anonymous, so hints are joined to tracks spatially: a hint
/// applies to the track nearest it within `HINT_RADIUS_M`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct HintTable {
    /// frame -> (x, y, color)
    rows: BTreeMap<u64, Vec<(f64, f64, String)>>,
}

impl HintTable {
    pub fn parse(path: &Path) -> Result<HintTable> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == HINT_HEADER => {}
            Some((_, other)) => {
                return Err(Error::parse(
                    path,
                    1,
                    format!("expected header {HINT_HEADER:?}, found {other:?}"),
                ))
            }
            None => return Err(Error::parse(path, 1, "empty hint file")),
        }
        let mut rows: BTreeMap<u64, Vec<(f64, f64, String)>> = BTreeMap::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(Error::parse(
                    path,
                    i + 1,
                    format!("expected 4 fields, found {}", fields.len()),
                ));
            }
            let frame: u64 = fields[0]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad frame {:?}", fields[0])))?;
            let x: f64 = fields[1]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad x {:?}", fields[1])))?;
            let y: f64 = fields[2]
                .parse()
                .map_err(|_| Error::parse(path, i + 1, format!("bad y {:?}", fields[2])))?;
            let color = fields[3].trim();
            if color.is_empty() {
                return Err(Error::parse(path, i + 1, "empty color"));
            }
            rows.entry(frame).or_default().push((x, y, color.to_string()));
        }
        Ok(HintTable { rows })
    }

    /// Color hint for a world position at a frame, if one lies within range.
    pub fn lookup(&self, frame: u64, x: f64, y: f64) -> Option<&str> {
        let candidates = self.rows.get(&frame)?;
        let mut best: Option<(f64, &str)> = None;
        for (hx, hy, color) in candidates {
            let d = ((hx - x).powi(2) + (hy - y).powi(2)).sqrt();
            if d <= HINT_RADIUS_M && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, color));
            }
        }
        best.map(|(_, c)| c)
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
