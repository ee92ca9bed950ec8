//! Text formats on disk: recordings (`.csv` + `.manifest` sidecar),
//! recording-id lists, and `key=value` files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::generator::{Provenance, SyntheticBatch};
use crate::signal::{
    ArmPosition, Condition, EmgFrame, EmgWindow, Intent, MotorState, Recording, RecordingMeta, TokenMatrix,
    WindowSource, CHANNELS, SAMPLE_RATE_HZ,
};

pub const RECORDING_HEADER: &str = "timestamp,emg1,emg2,emg3,emg4,emg5,emg6,emg7,emg8,label";
pub const RECORDING_EXT: &str = "csv";
pub const MANIFEST_EXT: &str = "manifest";
pub const PROVENANCE_EXT: &str = "provenance";
pub const PROVENANCE_HEADER: &str = "index,source_recording,prompt_offset,seed,stream";

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_string(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Renders frames and labels in the recording row format; timestamps restart at 0.
pub fn format_frames(frames: &[EmgFrame], labels: &[Intent]) -> String {
    let mut out = String::with_capacity(frames.len() * 48);
    out.push_str(RECORDING_HEADER);
    out.push('\n');
    for (i, (f, l)) in frames.iter().zip(labels).enumerate() {
        let centis = i * (100 / SAMPLE_RATE_HZ);
        let _ = write!(out, "{}.{:02}", centis / 100, centis % 100);
        for v in f.values() {
            let _ = write!(out, ",{v}");
        }
        let _ = writeln!(out, ",{l}");
    }
    out
}

pub fn parse_frames(path: &Path, text: &str) -> Result<(Vec<EmgFrame>, Vec<Intent>)> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == RECORDING_HEADER => {}
        Some((_, h)) => {
            return Err(Error::parse(path, 1, format!("expected header {RECORDING_HEADER:?}, found {h:?}")))
        }
        None => return Err(Error::parse(path, 1, "empty file")),
    }
    let mut frames = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != CHANNELS + 2 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {} fields, found {}", CHANNELS + 2, fields.len()),
            ));
        }
        fields[0]
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::parse(path, lineno, format!("bad timestamp {:?}", fields[0])))?;
        let mut v = [0u16; CHANNELS];
        for (c, slot) in v.iter_mut().enumerate() {
            let s = fields[c + 1].trim();
            *slot = s
                .parse::<u16>()
                .map_err(|_| Error::parse(path, lineno, format!("emg{} value {s:?} is not an integer level", c + 1)))?;
        }
        let frame = EmgFrame::new(v).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        let label = fields[CHANNELS + 1]
            .parse::<Intent>()
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        frames.push(frame);
        labels.push(label);
    }
    Ok((frames, labels))
}

pub fn read_frames(path: &Path) -> Result<(Vec<EmgFrame>, Vec<Intent>)> {
    parse_frames(path, &read_to_string(path)?)
}

pub fn format_manifest(meta: &RecordingMeta) -> String {
    format!(
        "subject_id={}\nsession={}\narm_position={}\nmotor_state={}\nrecording_index={}\n",
        meta.subject_id,
        meta.session_index,
        meta.condition.arm.as_str(),
        meta.condition.motor.as_str(),
        meta.recording_index
    )
}

pub fn read_manifest(path: &Path) -> Result<RecordingMeta> {
    let text = read_to_string(path)?;
    let kv = parse_kv(path, &text)?;
    let mut subject = None;
    let mut session = None;
    let mut arm = None;
    let mut motor = None;
    let mut index = None;
    for (key, value, line) in &kv {
        let bad = |m: String| Error::parse(path, *line, m);
        match key.as_str() {
            "subject_id" => subject = Some(value.clone()),
            "session" => session = Some(value.parse::<u32>().map_err(|_| bad(format!("bad session {value:?}")))?),
            "arm_position" => arm = Some(value.parse::<ArmPosition>().map_err(|e| bad(e.to_string()))?),
            "motor_state" => motor = Some(value.parse::<MotorState>().map_err(|e| bad(e.to_string()))?),
            "recording_index" => {
                index = Some(value.parse::<u32>().map_err(|_| bad(format!("bad recording_index {value:?}")))?)
            }
            other => return Err(bad(format!("unknown manifest key {other:?}"))),
        }
    }
    let missing = |k: &str| Error::parse(path, 0, format!("missing key {k}"));
    Ok(RecordingMeta {
        subject_id: subject.ok_or_else(|| missing("subject_id"))?,
        session_index: session.ok_or_else(|| missing("session"))?,
        condition: Condition {
            arm: arm.ok_or_else(|| missing("arm_position"))?,
            motor: motor.ok_or_else(|| missing("motor_state"))?,
        },
        recording_index: index.ok_or_else(|| missing("recording_index"))?,
    })
}

/// Writes `<dir>/<id>.csv` and its manifest; returns the CSV path.
pub fn write_recording(dir: &Path, rec: &Recording) -> Result<PathBuf> {
    let id = rec.id();
    let csv = dir.join(format!("{id}.{RECORDING_EXT}"));
    write_string(&csv, &format_frames(rec.frames(), rec.labels()))?;
    write_string(&dir.join(format!("{id}.{MANIFEST_EXT}")), &format_manifest(rec.meta()))?;
    Ok(csv)
}

/// Reads a recording CSV and the `.manifest` sidecar next to it.
pub fn read_recording(csv: &Path) -> Result<Recording> {
    let (frames, labels) = read_frames(csv)?;
    let meta = read_manifest(&csv.with_extension(MANIFEST_EXT))?;
    Recording::new(frames, labels, meta)
}

/// All recordings in `dir`, sorted by id.
pub fn load_corpus(dir: &Path) -> Result<Vec<Recording>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == RECORDING_EXT) && p.with_extension(MANIFEST_EXT).exists())
        .collect();
    paths.sort();
    let mut recs = paths.iter().map(|p| read_recording(p)).collect::<Result<Vec<_>>>()?;
    recs.sort_by_key(|r| r.id());
    Ok(recs)
}

/// `key=value` lines; `#` starts a comment, blank lines are skipped.
/// Returns `(key, value, line number)` in file order.
pub fn parse_kv(path: &Path, text: &str) -> Result<Vec<(String, String, usize)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, i + 1, format!("expected key=value, found {line:?}")))?;
        out.push((k.trim().to_string(), v.trim().to_string(), i + 1));
    }
    Ok(out)
}

pub fn read_kv(path: &Path) -> Result<Vec<(String, String, usize)>> {
    parse_kv(path, &read_to_string(path)?)
}

/// One recording id per line, `#` comments allowed.
pub fn parse_id_list(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn read_id_list(path: &Path) -> Result<Vec<String>> {
    Ok(parse_id_list(&read_to_string(path)?))
}

pub fn write_id_list(path: &Path, title: &str, ids: &[String]) -> Result<()> {
    let mut s = format!("# {title}\n");
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    write_string(path, &s)
}

/// Writes `<dir>/synthetic_<intent>.csv`, the windows back to back in the
/// recording row format, and a `.provenance` sidecar. Returns the CSV path.
pub fn write_synthetic(dir: &Path, batch: &SyntheticBatch) -> Result<PathBuf> {
    let csv = dir.join(format!("synthetic_{}.{RECORDING_EXT}", batch.intent));
    let mut frames = Vec::new();
    for w in &batch.windows {
        frames.extend((0..w.data.rows()).map(|r| EmgFrame::new(*w.data.row(r))).collect::<Result<Vec<_>>>()?);
    }
    let labels = vec![batch.intent; frames.len()];
    write_string(&csv, &format_frames(&frames, &labels))?;
    let s = &batch.sampling;
    let mut p = format!(
        "# intent={} window_len={} prompt_len={} temperature={} top_k={} sampling_seed={}\n{PROVENANCE_HEADER}\n",
        batch.intent,
        batch.windows.first().map_or(0, EmgWindow::len),
        batch.prompt_len,
        s.temperature,
        s.top_k.map_or("none".into(), |k| k.to_string()),
        s.seed,
    );
    for v in &batch.provenance {
        let _ = writeln!(p, "{},{},{},{},{}", v.index, v.source.recording_id, v.source.start, v.seed, v.stream);
    }
    write_string(&csv.with_extension(PROVENANCE_EXT), &p)?;
    Ok(csv)
}

/// Reads a file written by [`write_synthetic`] back into windows.
pub fn read_synthetic(csv: &Path) -> Result<(Vec<EmgWindow>, Vec<Provenance>)> {
    let (frames, labels) = read_frames(csv)?;
    let ppath = csv.with_extension(PROVENANCE_EXT);
    let text = read_to_string(&ppath)?;
    let mut lines = text.lines().enumerate();
    let window_len: usize = match lines.next() {
        Some((_, h)) if h.starts_with('#') => h
            .split_whitespace()
            .find_map(|t| t.strip_prefix("window_len="))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse(&ppath, 1, "header lacks window_len"))?,
        _ => return Err(Error::parse(&ppath, 1, "missing provenance header comment")),
    };
    match lines.next() {
        Some((_, h)) if h.trim() == PROVENANCE_HEADER => {}
        _ => return Err(Error::parse(&ppath, 2, format!("expected {PROVENANCE_HEADER:?}"))),
    }
    let mut prov = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |what: &str| Error::parse(&ppath, i + 1, format!("bad {what}"));
        if f.len() != 5 {
            return Err(Error::parse(&ppath, i + 1, format!("expected 5 fields, found {}", f.len())));
        }
        prov.push(Provenance {
            index: f[0].parse().map_err(|_| bad("index"))?,
            source: WindowSource {
                recording_id: f[1].to_string(),
                start: f[2].parse().map_err(|_| bad("prompt_offset"))?,
            },
            seed: f[3].parse().map_err(|_| bad("seed"))?,
            stream: f[4].parse().map_err(|_| bad("stream"))?,
        });
    }
    if window_len == 0 || frames.len() != prov.len() * window_len {
        return Err(Error::MalformedRecording(format!(
            "{}: {} rows do not make {} windows of {window_len}",
            csv.display(),
            frames.len(),
            prov.len()
        )));
    }
    let windows = prov
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let range = k * window_len..(k + 1) * window_len;
            let intent = labels[range.start];
            if labels[range.clone()].iter().any(|&l| l != intent) {
                return Err(Error::MalformedRecording(format!("{}: window {k} mixes intents", csv.display())));
            }
            Ok(EmgWindow {
                data: TokenMatrix::from_frames(&frames[range]),
                intent,
                source: p.source.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((windows, prov))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Recording {
        let frames = (0..5u16).map(|i| EmgFrame::new([i * 100; CHANNELS]).unwrap()).collect();
        let labels = vec![Intent::Relax, Intent::Open, Intent::Open, Intent::Close, Intent::Relax];
        let meta = RecordingMeta {
            subject_id: "S3".into(),
            session_index: 2,
            condition: Condition::ALL[3],
            recording_index: 1,
        };
        Recording::new(frames, labels, meta).unwrap()
    }

    #[test]
    fn recording_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let rec = sample();
        let path = write_recording(dir.path(), &rec).unwrap();
        assert_eq!(path.file_name().unwrap(), "S3_s2_off_table_on_r1.csv");
        assert_eq!(read_recording(&path).unwrap(), rec);
        assert_eq!(load_corpus(dir.path()).unwrap(), vec![rec]);
    }

    #[test]
    fn synthetic_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let window = |k: u16| EmgWindow {
            data: TokenMatrix::from_flat((0..4 * CHANNELS as u16).map(|v| v + k).collect()).unwrap(),
            intent: Intent::Close,
            source: WindowSource {
                recording_id: "S1_s1_on_table_off_r1".into(),
                start: 100 + usize::from(k),
            },
        };
        let batch = SyntheticBatch {
            intent: Intent::Close,
            windows: vec![window(0), window(7)],
            provenance: (0..2)
                .map(|i| Provenance {
                    index: i,
                    source: window(if i == 0 { 0 } else { 7 }).source,
                    seed: 99,
                    stream: i as u64,
                })
                .collect(),
            prompt_len: 2,
            sampling: Default::default(),
        };
        let csv = write_synthetic(dir.path(), &batch).unwrap();
        assert_eq!(csv.file_name().unwrap(), "synthetic_close.csv");
        let (windows, prov) = read_synthetic(&csv).unwrap();
        assert_eq!(windows, batch.windows);
        assert_eq!(prov, batch.provenance);

        let p = csv.with_extension(PROVENANCE_EXT);
        let text = fs::read_to_string(&p).unwrap().replace(",107,", ",x,");
        fs::write(&p, text).unwrap();
        match read_synthetic(&csv) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rows_have_expected_shape() {
        let text = format_frames(sample().frames(), sample().labels());
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), RECORDING_HEADER);
        assert_eq!(lines.next().unwrap(), "0.00,0,0,0,0,0,0,0,0,relax");
        assert_eq!(lines.nth(2).unwrap(), "0.03,300,300,300,300,300,300,300,300,close");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let p = Path::new("x.csv");
        let bad = format!("{RECORDING_HEADER}\n0.00,1,2,3,4,5,6,7,8,open\n0.01,1,2,3,4,5,6,7,1001,open\n");
        match parse_frames(p, &bad) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_label = format!("{RECORDING_HEADER}\n0.00,1,2,3,4,5,6,7,8,grasp\n");
        assert!(matches!(parse_frames(p, &bad_label), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_frames(p, "a,b\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn kv_and_id_lists() {
        let kv = parse_kv(Path::new("c"), "# c\nmodel.n_embed = 32\n\ntrain.lr=0.1 # x\n").unwrap();
        assert_eq!(kv[0], ("model.n_embed".into(), "32".into(), 2));
        assert_eq!(kv[1].1, "0.1");
        assert!(parse_kv(Path::new("c"), "novalue\n").is_err());
        assert_eq!(parse_id_list("# train\na\n\nb # tail\n"), vec!["a", "b"]);
    }
}
