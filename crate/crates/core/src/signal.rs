//! Domain types for quantized 8-channel EMG and the deterministic transforms
//! applied before modelling: median filtering, quantization, channel
//! rotation, windowing and support/query splitting.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Electrodes on the armband.
pub const CHANNELS: usize = 8;
/// Largest quantized amplitude; levels are `0..=MAX_LEVEL`.
pub const MAX_LEVEL: u16 = 1000;
/// Frames per second of every recording.
pub const SAMPLE_RATE_HZ: usize = 100;
/// Default classifier / generation window length (2.56 s).
pub const DEFAULT_WINDOW_LEN: usize = 256;
/// Default prompt length (1.5 s).
pub const DEFAULT_PROMPT_LEN: usize = 150;
/// Default odd median-filter width.
pub const DEFAULT_MEDIAN_WIDTH: usize = 9;

/// Hand movement the user intends. Label encoding is `open=0, relax=1, close=2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Intent {
    Open,
    Relax,
    Close,
}

impl Intent {
    pub const ALL: [Intent; 3] = [Intent::Open, Intent::Relax, Intent::Close];

    pub fn index(self) -> usize {
        match self {
            Intent::Open => 0,
            Intent::Relax => 1,
            Intent::Close => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Intent> {
        Intent::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Open => "open",
            Intent::Relax => "relax",
            Intent::Close => "close",
        }
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "open" => Ok(Intent::Open),
            "relax" => Ok(Intent::Relax),
            "close" => Ok(Intent::Close),
            other => Err(Error::invalid(format!(
                "unknown intent {other:?} (expected open, close or relax)"
            ))),
        }
    }
}

/// One 10 ms sample of all eight channels, quantized to `0..=1000`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EmgFrame([u16; CHANNELS]);

impl EmgFrame {
    pub fn new(values: [u16; CHANNELS]) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v > MAX_LEVEL) {
            return Err(Error::invalid(format!("frame value {v} outside [0, {MAX_LEVEL}]")));
        }
        Ok(EmgFrame(values))
    }

    pub fn values(&self) -> &[u16; CHANNELS] {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArmPosition {
    OnTable,
    OffTable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotorState {
    Off,
    On,
}

impl ArmPosition {
    pub fn as_str(self) -> &'static str {
        match self {
            ArmPosition::OnTable => "on_table",
            ArmPosition::OffTable => "off_table",
        }
    }
}

impl MotorState {
    pub fn as_str(self) -> &'static str {
        match self {
            MotorState::Off => "off",
            MotorState::On => "on",
        }
    }
}

impl FromStr for ArmPosition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "on_table" => Ok(ArmPosition::OnTable),
            "off_table" => Ok(ArmPosition::OffTable),
            o => Err(Error::invalid(format!("unknown arm position {o:?}"))),
        }
    }
}

impl FromStr for MotorState {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "on" => Ok(MotorState::On),
            "off" => Ok(MotorState::Off),
            o => Err(Error::invalid(format!("unknown motor state {o:?}"))),
        }
    }
}

/// Experimental context: arm support crossed with orthosis motor state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Condition {
    pub arm: ArmPosition,
    pub motor: MotorState,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition { arm: ArmPosition::OnTable, motor: MotorState::Off },
        Condition { arm: ArmPosition::OnTable, motor: MotorState::On },
        Condition { arm: ArmPosition::OffTable, motor: MotorState::Off },
        Condition { arm: ArmPosition::OffTable, motor: MotorState::On },
    ];
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.arm.as_str(), self.motor.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RecordingMeta {
    pub subject_id: String,
    /// 1 or 2.
    pub session_index: u32,
    pub condition: Condition,
    pub recording_index: u32,
}

impl RecordingMeta {
    /// Stable identifier, also used as the file stem on disk.
    pub fn id(&self) -> String {
        format!(
            "{}_s{}_{}_r{}",
            self.subject_id, self.session_index, self.condition, self.recording_index
        )
    }
}

/// Row-major `rows × 8` matrix of quantized levels.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct TokenMatrix {
    data: Vec<u16>,
}

impl TokenMatrix {
    pub fn from_flat(data: Vec<u16>) -> Result<Self> {
        if data.len() % CHANNELS != 0 {
            return Err(Error::invalid(format!(
                "flat length {} is not a multiple of {CHANNELS}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|&&v| v > MAX_LEVEL) {
            return Err(Error::invalid(format!("value {v} outside [0, {MAX_LEVEL}]")));
        }
        Ok(TokenMatrix { data })
    }

    pub fn from_frames(frames: &[EmgFrame]) -> Self {
        TokenMatrix {
            data: frames.iter().flat_map(|f| f.0).collect(),
        }
    }

    /// Builds from rows without the `0..=1000` check; for vocabularies other than the default.
    pub(crate) fn from_flat_unchecked(data: Vec<u16>) -> Self {
        debug_assert_eq!(data.len() % CHANNELS, 0);
        TokenMatrix { data }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / CHANNELS
    }

    pub fn row(&self, r: usize) -> &[u16; CHANNELS] {
        self.data[r * CHANNELS..(r + 1) * CHANNELS]
            .try_into()
            .expect("row slice has CHANNELS entries")
    }

    pub fn get(&self, r: usize, c: usize) -> u16 {
        self.data[r * CHANNELS + c]
    }

    pub fn as_flat(&self) -> &[u16] {
        &self.data
    }

    pub fn push_row(&mut self, row: [u16; CHANNELS]) {
        self.data.extend_from_slice(&row);
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> TokenMatrix {
        TokenMatrix {
            data: self.data[start * CHANNELS..end * CHANNELS].to_vec(),
        }
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = u16> + '_ {
        self.data.iter().skip(c).step_by(CHANNELS).copied()
    }
}

/// Where a window or prompt was cut from.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct WindowSource {
    pub recording_id: String,
    /// Frame offset within the original (unsliced) recording.
    pub start: usize,
}

/// Continuous labelled recording at 100 Hz.
///
/// `offset` is the position of `frames[0]` in the recording it was sliced
/// from (0 for whole recordings).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Recording {
    frames: Vec<EmgFrame>,
    labels: Vec<Intent>,
    meta: RecordingMeta,
    offset: usize,
}

impl Recording {
    pub fn new(frames: Vec<EmgFrame>, labels: Vec<Intent>, meta: RecordingMeta) -> Result<Self> {
        if frames.len() != labels.len() {
            return Err(Error::MalformedRecording(format!(
                "{} frames but {} labels",
                frames.len(),
                labels.len()
            )));
        }
        if !(1..=2).contains(&meta.session_index) {
            return Err(Error::MalformedRecording(format!(
                "session index {} not in {{1,2}}",
                meta.session_index
            )));
        }
        Ok(Recording {
            frames,
            labels,
            meta,
            offset: 0,
        })
    }

    pub fn frames(&self) -> &[EmgFrame] {
        &self.frames
    }

    pub fn labels(&self) -> &[Intent] {
        &self.labels
    }

    pub fn meta(&self) -> &RecordingMeta {
        &self.meta
    }

    pub fn id(&self) -> String {
        self.meta.id()
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames `start..end` as a recording that remembers its offset.
    pub fn slice(&self, start: usize, end: usize) -> Recording {
        Recording {
            frames: self.frames[start..end].to_vec(),
            labels: self.labels[start..end].to_vec(),
            meta: self.meta.clone(),
            offset: self.offset + start,
        }
    }

    /// Maximal runs of a constant label, in order.
    pub fn segments(&self) -> Vec<Segment> {
        label_segments(&self.labels)
    }

    pub fn tokens(&self, start: usize, end: usize) -> TokenMatrix {
        TokenMatrix::from_frames(&self.frames[start..end])
    }
}

/// A maximal constant-label run `[start, end)` within a recording.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub intent: Intent,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

pub fn label_segments(labels: &[Intent]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.intent == l => seg.end = i + 1,
            _ => out.push(Segment {
                intent: l,
                start: i,
                end: i + 1,
            }),
        }
    }
    out
}

/// Fixed-length single-intent window; the unit consumed by models and classifiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmgWindow {
    pub data: TokenMatrix,
    pub intent: Intent,
    pub source: WindowSource,
}

impl EmgWindow {
    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }
}

/// Single-intent conditioning slice for generation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prompt {
    pub data: TokenMatrix,
    pub intent: Intent,
    pub source: WindowSource,
}

/// Per-channel running median with replicate padding at both ends.
///
/// Works on anything totally ordered enough for a sort (`f64` raw values,
/// integer levels). `NaN` inputs are ordered as largest.
pub fn median_filter<T>(raw: &[[T; CHANNELS]], width: usize) -> Result<Vec<[T; CHANNELS]>>
where
    T: Copy + PartialOrd,
{
    if width == 0 || width % 2 == 0 {
        return Err(Error::invalid(format!("median width must be odd and positive, got {width}")));
    }
    if raw.is_empty() {
        return Err(Error::invalid("median filter needs at least one frame"));
    }
    let n = raw.len();
    let half = (width / 2) as isize;
    let mut out = raw.to_vec();
    let mut buf: Vec<T> = Vec::with_capacity(width);
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Greater);
    for c in 0..CHANNELS {
        for (i, slot) in out.iter_mut().enumerate() {
            buf.clear();
            for d in -half..=half {
                let j = (i as isize + d).clamp(0, n as isize - 1) as usize;
                buf.push(raw[j][c]);
            }
            let (_, m, _) = buf.select_nth_unstable_by(width / 2, cmp);
            slot[c] = *m;
        }
    }
    Ok(out)
}

/// Input span mapped affinely onto `0..=1000`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for RawRange {
    /// Signed 8-bit armband ADC.
    fn default() -> Self {
        RawRange { lo: -128.0, hi: 127.0 }
    }
}

/// Maps `raw` from `[lo, hi]` onto `[0, 1000]`, rounding half away from zero, then clips.
pub fn quantize(raw: f64, range: RawRange) -> Result<u16> {
    if !raw.is_finite() {
        return Err(Error::invalid(format!("cannot quantize non-finite value {raw}")));
    }
    if !(range.lo < range.hi) || !range.lo.is_finite() || !range.hi.is_finite() {
        return Err(Error::invalid(format!("raw range [{}, {}] is empty", range.lo, range.hi)));
    }
    let scaled = (raw - range.lo) / (range.hi - range.lo) * f64::from(MAX_LEVEL);
    // f64::round is half-away-from-zero.
    Ok(scaled.round().clamp(0.0, f64::from(MAX_LEVEL)) as u16)
}

/// Median filter followed by quantization: raw armband samples to frames.
pub fn preprocess(raw: &[[f64; CHANNELS]], width: usize, range: RawRange) -> Result<Vec<EmgFrame>> {
    let filtered = median_filter(raw, width)?;
    filtered
        .iter()
        .map(|f| {
            let mut v = [0u16; CHANNELS];
            for (dst, &x) in v.iter_mut().zip(f) {
                *dst = quantize(x, range)?;
            }
            Ok(EmgFrame(v))
        })
        .collect()
}

/// Row-major `T×8` matrix with each level mapped by `v / 500 − 1` into `[−1, 1]`.
pub fn normalize_for_classifier<S: Scalar>(window: &EmgWindow) -> Vec<S> {
    normalize_tokens(&window.data)
}

pub fn normalize_tokens<S: Scalar>(data: &TokenMatrix) -> Vec<S> {
    let half = S::of(f64::from(MAX_LEVEL) / 2.0);
    data.as_flat()
        .iter()
        .map(|&v| S::of(f64::from(v)) / half - S::one())
        .collect()
}

/// Cyclic channel shift: output channel `j` is input channel `(j + k) mod 8`.
pub fn rotate_channels(window: &TokenMatrix, k: usize) -> Result<TokenMatrix> {
    if k >= CHANNELS {
        return Err(Error::invalid(format!("rotation {k} outside 0..=7")));
    }
    let mut data = Vec::with_capacity(window.as_flat().len());
    for r in 0..window.rows() {
        data.extend_from_slice(&rotate_row(window.row(r), k));
    }
    Ok(TokenMatrix { data })
}

#[inline]
pub fn rotate_row(row: &[u16; CHANNELS], k: usize) -> [u16; CHANNELS] {
    std::array::from_fn(|j| row[(j + k) % CHANNELS])
}

/// Single-intent windows of `length` frames at starts `0, stride, 2·stride, …`.
///
/// Windows that would straddle a cue transition are skipped. A recording
/// shorter than `length` yields no windows.
pub fn segment_windows(recording: &Recording, length: usize, stride: usize) -> Result<Vec<EmgWindow>> {
    if length == 0 || stride == 0 {
        return Err(Error::invalid("window length and stride must be positive"));
    }
    Ok(single_intent_starts(recording.labels(), length, stride)
        .into_iter()
        .map(|s| EmgWindow {
            data: recording.tokens(s, s + length),
            intent: recording.labels()[s],
            source: WindowSource {
                recording_id: recording.id(),
                start: recording.offset() + s,
            },
        })
        .collect())
}

/// Starts (multiples of `stride`) whose `length`-frame span carries one label.
pub(crate) fn single_intent_starts(labels: &[Intent], length: usize, stride: usize) -> Vec<usize> {
    if labels.len() < length {
        return Vec::new();
    }
    let mut run_end = vec![0usize; labels.len()];
    let mut end = labels.len();
    for i in (0..labels.len()).rev() {
        if i + 1 < labels.len() && labels[i + 1] != labels[i] {
            end = i + 1;
        }
        run_end[i] = end;
    }
    (0..=labels.len() - length)
        .step_by(stride)
        .filter(|&s| run_end[s] >= s + length)
        .collect()
}

/// Open → relax → close → relax cycles found in a label track, as `[start, end)`.
pub fn motions(labels: &[Intent]) -> Vec<(usize, usize)> {
    let segs = label_segments(labels);
    let mut out = Vec::new();
    let mut i = 0;
    while i < segs.len() {
        if segs[i].intent != Intent::Open {
            i += 1;
            continue;
        }
        let start = segs[i].start;
        let close = (i + 1..segs.len()).find(|&j| segs[j].intent == Intent::Close);
        let Some(c) = close else { break };
        match segs.get(c + 1) {
            Some(s) if s.intent == Intent::Relax => {
                out.push((start, s.end));
                i = c + 2;
            }
            _ => {
                // close cue not followed by relax; the motion is incomplete
                break;
            }
        }
    }
    out
}

/// Support set = leading frames through the end of the first motion; query = the rest.
pub fn split_support_query(recording: &Recording) -> Result<(Recording, Recording)> {
    let found = motions(recording.labels());
    if found.len() < 3 {
        return Err(Error::MalformedRecording(format!(
            "{}: found {} open-relax-close motions, need at least 3",
            recording.id(),
            found.len()
        )));
    }
    let cut = found[0].1;
    Ok((recording.slice(0, cut), recording.slice(cut, recording.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn meta() -> RecordingMeta {
        RecordingMeta {
            subject_id: "S1".into(),
            session_index: 1,
            condition: Condition::ALL[0],
            recording_index: 1,
        }
    }

    fn recording_from_labels(labels: Vec<Intent>) -> Recording {
        let frames = labels
            .iter()
            .enumerate()
            .map(|(i, _)| EmgFrame([(i % 1001) as u16; CHANNELS]))
            .collect();
        Recording::new(frames, labels, meta()).unwrap()
    }

    fn protocol_labels() -> Vec<Intent> {
        let mut l = vec![Intent::Relax; 500];
        for _ in 0..3 {
            for i in [Intent::Open, Intent::Relax, Intent::Close, Intent::Relax] {
                l.extend(std::iter::repeat(i).take(500));
            }
        }
        l
    }

    fn brute_median(raw: &[[f64; CHANNELS]], width: usize) -> Vec<[f64; CHANNELS]> {
        let n = raw.len() as isize;
        let h = (width / 2) as isize;
        (0..raw.len())
            .map(|i| {
                std::array::from_fn(|c| {
                    let mut v: Vec<f64> = (i as isize - h..=i as isize + h)
                        .map(|j| raw[j.clamp(0, n - 1) as usize][c])
                        .collect();
                    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    v[v.len() / 2]
                })
            })
            .collect()
    }

    #[test]
    fn median_constant_and_impulse() {
        let constant = vec![[5.0; CHANNELS]; 20];
        assert_eq!(median_filter(&constant, 9).unwrap(), constant);

        let mut impulse = vec![[0.0; CHANNELS]; 9];
        impulse[4] = [100.0; CHANNELS];
        let out = median_filter(&impulse, 9).unwrap();
        assert!(out.iter().all(|f| f.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn median_rejects_bad_width() {
        let x = vec![[1.0; CHANNELS]; 3];
        assert!(matches!(median_filter(&x, 4), Err(Error::InvalidArgument(_))));
        assert!(matches!(median_filter(&x, 0), Err(Error::InvalidArgument(_))));
        assert!(median_filter::<f64>(&[], 3).is_err());
    }

    #[test]
    fn median_width_one_is_identity() {
        let x: Vec<[f64; CHANNELS]> = (0..7).map(|i| [i as f64; CHANNELS]).collect();
        assert_eq!(median_filter(&x, 1).unwrap(), x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn median_matches_sort_oracle(
            raw in prop::collection::vec(prop::array::uniform8(-200.0f64..200.0), 1..60),
            w in prop::sample::select(vec![1usize, 3, 5, 9, 11]),
        ) {
            prop_assert_eq!(median_filter(&raw, w).unwrap(), brute_median(&raw, w));
        }

        #[test]
        fn quantize_is_idempotent_on_levels(v in 0u16..=1000) {
            let r = RawRange { lo: 0.0, hi: 1000.0 };
            prop_assert_eq!(quantize(f64::from(v), r).unwrap(), v);
        }

        #[test]
        fn rotation_inverse(rows in prop::collection::vec(prop::array::uniform8(0u16..=1000), 1..10), k in 0usize..8) {
            let m = TokenMatrix::from_flat(rows.concat()).unwrap();
            let back = rotate_channels(&rotate_channels(&m, k).unwrap(), (CHANNELS - k) % CHANNELS).unwrap();
            prop_assert_eq!(back, m);
        }

        #[test]
        fn windows_never_mix_labels(
            runs in prop::collection::vec((0usize..3, 1usize..40), 1..12),
            len in 1usize..30, stride in 1usize..7,
        ) {
            let labels: Vec<Intent> = runs.iter()
                .flat_map(|&(i, n)| std::iter::repeat(Intent::ALL[i]).take(n)).collect();
            let rec = recording_from_labels(labels.clone());
            for w in segment_windows(&rec, len, stride).unwrap() {
                let s = w.source.start;
                prop_assert!(labels[s..s + len].iter().all(|&l| l == w.intent));
                prop_assert_eq!(s % stride, 0);
            }
        }
    }

    #[test]
    fn quantize_endpoints_and_clip() {
        let r = RawRange::default();
        assert_eq!(quantize(r.lo, r).unwrap(), 0);
        assert_eq!(quantize(r.hi, r).unwrap(), 1000);
        assert_eq!(quantize(500.0, r).unwrap(), 1000);
        assert_eq!(quantize(-1e9, r).unwrap(), 0);
        assert_eq!(quantize((r.lo + r.hi) / 2.0, r).unwrap(), 500);
        assert!(quantize(f64::NAN, r).is_err());
        assert!(quantize(f64::INFINITY, r).is_err());
        assert!(quantize(1.0, RawRange { lo: 1.0, hi: 1.0 }).is_err());
    }

    #[test]
    fn quantize_rounds_half_away_from_zero() {
        let r = RawRange { lo: 0.0, hi: 1000.0 };
        assert_eq!(quantize(2.5, r).unwrap(), 3);
        assert_eq!(quantize(2.4999, r).unwrap(), 2);
    }

    #[test]
    fn normalization_extremes() {
        let w = |v: u16| EmgWindow {
            data: TokenMatrix::from_flat(vec![v; 16]).unwrap(),
            intent: Intent::Open,
            source: WindowSource { recording_id: "x".into(), start: 0 },
        };
        assert!(normalize_for_classifier::<f64>(&w(0)).iter().all(|&x| x == -1.0));
        assert!(normalize_for_classifier::<f64>(&w(1000)).iter().all(|&x| x == 1.0));
        assert!(normalize_for_classifier::<f32>(&w(500)).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rotation_examples() {
        let m = TokenMatrix::from_flat((0..4).flat_map(|_| 0..8u16).collect()).unwrap();
        assert_eq!(rotate_channels(&m, 0).unwrap(), m);
        let r3 = rotate_channels(&m, 3).unwrap();
        assert!(r3.column(0).all(|v| v == 3));
        let mut x = m.clone();
        for _ in 0..8 {
            x = rotate_channels(&x, 1).unwrap();
        }
        assert_eq!(x, m);
        assert!(rotate_channels(&m, 8).is_err());
    }

    #[test]
    fn segment_examples() {
        let rec = recording_from_labels(vec![Intent::Relax; 256]);
        let w = segment_windows(&rec, 256, 1).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].intent, Intent::Relax);

        let mut l = vec![Intent::Open; 150];
        l.extend(vec![Intent::Close; 150]);
        assert!(segment_windows(&recording_from_labels(l), 256, 1).unwrap().is_empty());

        let rec = recording_from_labels(vec![Intent::Open; 500]);
        let starts: Vec<usize> = segment_windows(&rec, 256, 10).unwrap().iter().map(|w| w.source.start).collect();
        let expected: Vec<usize> = (0..=500 - 256).filter(|s| s % 10 == 0).collect();
        assert_eq!(starts.len(), 25);
        assert_eq!(starts, expected);

        let short = recording_from_labels(vec![Intent::Open; 10]);
        assert!(segment_windows(&short, 256, 1).unwrap().is_empty());
    }

    #[test]
    fn support_query_partition() {
        let rec = recording_from_labels(protocol_labels());
        let (support, query) = split_support_query(&rec).unwrap();
        assert_eq!(support.len() + query.len(), rec.len());
        assert_eq!(query.offset(), support.len());
        let count = |r: &Recording, i: Intent| r.segments().iter().filter(|s| s.intent == i).count();
        assert_eq!(count(&support, Intent::Open), 1);
        assert_eq!(count(&support, Intent::Close), 1);
        assert_eq!(count(&query, Intent::Open), 2);
        assert_eq!(count(&query, Intent::Close), 2);
        let mut joined = support.frames().to_vec();
        joined.extend_from_slice(query.frames());
        assert_eq!(joined, rec.frames());
    }

    #[test]
    fn support_query_needs_three_motions() {
        let mut labels = protocol_labels();
        labels.truncate(500 + 2 * 2000);
        let rec = recording_from_labels(labels);
        assert!(matches!(split_support_query(&rec), Err(Error::MalformedRecording(_))));
    }

    #[test]
    fn frame_and_intent_validation() {
        assert!(EmgFrame::new([1001; CHANNELS]).is_err());
        assert!(EmgFrame::new([1000; CHANNELS]).is_ok());
        assert_eq!("relax".parse::<Intent>().unwrap(), Intent::Relax);
        assert!("grasp".parse::<Intent>().is_err());
        let enc: Vec<usize> = Intent::ALL.iter().map(|i| i.index()).collect();
        assert_eq!(enc, vec![0, 1, 2]);
        assert_eq!(Intent::ALL, [Intent::Open, Intent::Relax, Intent::Close]);
    }
}
