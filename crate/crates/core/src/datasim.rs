//! Parametric EMG session simulator following the cued collection protocol:
//! a 5 s relax lead-in, then three open-relax-close-relax motions of 5 s cues.
//!
//! Signal model per channel: baseline + gain(t) · envelope(t) + condition
//! effects + Gaussian noise, where the envelope follows first-order
//! rise/decay dynamics toward the active cue's amplitude. The raw stream is
//! then median filtered and quantized like real armband data.
//!
//! Simulator settings are synthetic; none of them is a claim about stroke
//! physiology.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io;
use crate::signal::{
    preprocess, ArmPosition, Condition, Intent, MotorState, RawRange, Recording, RecordingMeta, CHANNELS,
    DEFAULT_MEDIAN_WIDTH, SAMPLE_RATE_HZ,
};

/// Frames per verbal cue (5 s).
pub const CUE_FRAMES: usize = 5 * SAMPLE_RATE_HZ;
pub const MOTIONS_PER_RECORDING: usize = 3;
pub const PROFILE_VERSION: u32 = 1;
/// Frozen simulator settings; identical to `SimParams::default()`.
pub const DEFAULT_PROFILE: &str = include_str!("../profiles/simulator_v1.profile");

/// SplitMix64 finalizer; derives independent seeds from structured keys.
pub fn derive_seed(base: u64, keys: &[u64]) -> u64 {
    let mut z = base;
    for &k in keys {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xBF58_476D_1CE4_E5B9));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Global knobs from which subject profiles and condition effects are drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct SimParams {
    pub baseline_lo: f64,
    pub baseline_hi: f64,
    pub open_peak_lo: f64,
    pub open_peak_hi: f64,
    pub close_peak_lo: f64,
    pub close_peak_hi: f64,
    pub relax_tone_hi: f64,
    /// Width (in channels) of the activation bump around its centre electrode.
    pub pattern_width: f64,
    pub rise_tau_lo: f64,
    pub rise_tau_hi: f64,
    pub decay_tau: f64,
    pub noise: f64,
    pub noise_prop: f64,
    /// Range of the fractional amplitude growth over one recording.
    pub drift_lo: f64,
    pub drift_hi: f64,
    /// Per-channel amplitude perturbation between sessions (± fraction).
    pub session_jitter: f64,
    pub arm_gain_lo: f64,
    pub arm_gain_hi: f64,
    pub arm_tone: f64,
    pub motor_burst: f64,
    pub motor_delay_s: f64,
    pub motor_duration_s: f64,
    pub lead_in_frames: usize,
    pub cue_frames: usize,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            baseline_lo: -112.0,
            baseline_hi: -96.0,
            open_peak_lo: 45.0,
            open_peak_hi: 95.0,
            close_peak_lo: 70.0,
            close_peak_hi: 140.0,
            relax_tone_hi: 12.0,
            pattern_width: 1.3,
            rise_tau_lo: 0.15,
            rise_tau_hi: 0.6,
            decay_tau: 0.35,
            noise: 4.0,
            noise_prop: 0.12,
            drift_lo: 0.05,
            drift_hi: 0.35,
            session_jitter: 0.2,
            arm_gain_lo: 0.7,
            arm_gain_hi: 1.5,
            arm_tone: 12.0,
            motor_burst: 35.0,
            motor_delay_s: 1.0,
            motor_duration_s: 1.0,
            lead_in_frames: CUE_FRAMES,
            cue_frames: CUE_FRAMES,
        }
    }
}

macro_rules! sim_fields {
    ($m:ident) => {
        $m!(
            baseline_lo, baseline_hi, open_peak_lo, open_peak_hi, close_peak_lo, close_peak_hi, relax_tone_hi,
            pattern_width, rise_tau_lo, rise_tau_hi, decay_tau, noise, noise_prop, drift_lo, drift_hi,
            session_jitter, arm_gain_lo, arm_gain_hi, arm_tone, motor_burst, motor_delay_s, motor_duration_s
        )
    };
}

impl SimParams {
    /// `key=value` lines, prefixed with the profile format version.
    pub fn to_kv(&self) -> String {
        let mut s = format!("version={PROFILE_VERSION}\n");
        macro_rules! put {
            ($($f:ident),*) => { $( let _ = writeln!(s, "{}={}", stringify!($f), self.$f); )* };
        }
        sim_fields!(put);
        let _ = writeln!(s, "lead_in_frames={}", self.lead_in_frames);
        let _ = writeln!(s, "cue_frames={}", self.cue_frames);
        s
    }

    /// Applies one `key=value` setting; returns false for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let num = |v: &str| {
            v.parse::<f64>()
                .map_err(|_| Error::invalid(format!("sim.{key}: {v:?} is not a number")))
        };
        macro_rules! assign {
            ($($f:ident),*) => {
                match key {
                    $( stringify!($f) => { self.$f = num(value)?; return Ok(true); } )*
                    _ => {}
                }
            };
        }
        sim_fields!(assign);
        match key {
            "lead_in_frames" | "cue_frames" => {
                let v = value
                    .parse::<usize>()
                    .map_err(|_| Error::invalid(format!("sim.{key}: {value:?} is not a count")))?;
                if key == "lead_in_frames" {
                    self.lead_in_frames = v;
                } else {
                    self.cue_frames = v;
                }
                Ok(true)
            }
            "version" => {
                if value.trim() != PROFILE_VERSION.to_string() {
                    return Err(Error::invalid(format!("simulator profile version {value} is not supported")));
                }
                Ok(true)
            }
            _ => Ok(false),
        }
    }

    pub fn from_kv_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_str(path, &text)
    }

    /// Settings over the defaults; `path` is only used in diagnostics.
    pub fn from_kv_str(path: &Path, text: &str) -> Result<Self> {
        let mut p = SimParams::default();
        for (k, v, line) in io::parse_kv(path, text)? {
            if !p.set(&k, &v)? {
                return Err(Error::parse(path, line, format!("unknown simulator key {k:?}")));
            }
        }
        Ok(p)
    }

    pub fn recording_len(&self) -> usize {
        self.lead_in_frames + MOTIONS_PER_RECORDING * 4 * self.cue_frames
    }
}

/// Per-subject signal characteristics. Activation rows are indexed by `Intent::index()`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubjectProfile {
    pub subject_id: String,
    pub baseline: [f64; CHANNELS],
    pub activation: [[f64; CHANNELS]; 3],
    pub rise_tau: [[f64; CHANNELS]; 3],
    pub decay_tau: f64,
    pub noise: f64,
    pub noise_prop: f64,
    /// Fractional amplitude growth across one recording (fatigue / spasticity).
    pub drift_rate: f64,
    pub seed: u64,
}

fn bump(center: f64, width: f64, c: usize) -> f64 {
    let raw = (c as f64 - center).abs();
    let d = raw.min(CHANNELS as f64 - raw);
    (-0.5 * (d / width).powi(2)).exp()
}

impl SubjectProfile {
    /// Draws a subject: each intent activates a bump of electrodes around a
    /// subject-specific centre, so patterns differ across subjects.
    pub fn random(subject_id: impl Into<String>, params: &SimParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let baseline = std::array::from_fn(|_| rng.gen_range(params.baseline_lo..params.baseline_hi));
        let open_center = rng.gen_range(0.0..CHANNELS as f64);
        let close_center = (open_center + rng.gen_range(2.5..5.5)) % CHANNELS as f64;
        let open_peak = rng.gen_range(params.open_peak_lo..params.open_peak_hi);
        let close_peak = rng.gen_range(params.close_peak_lo..params.close_peak_hi);
        let mut activation = [[0.0; CHANNELS]; 3];
        for c in 0..CHANNELS {
            let tone = rng.gen_range(0.0..params.relax_tone_hi);
            activation[Intent::Relax.index()][c] = tone;
            // co-contraction: each movement leaks into the other's electrodes
            let leak = rng.gen_range(0.05..0.25);
            activation[Intent::Open.index()][c] = tone
                + open_peak * (bump(open_center, params.pattern_width, c) + leak * bump(close_center, params.pattern_width, c))
                    * rng.gen_range(0.8..1.2);
            activation[Intent::Close.index()][c] = tone
                + close_peak * (bump(close_center, params.pattern_width, c) + leak * bump(open_center, params.pattern_width, c))
                    * rng.gen_range(0.8..1.2);
        }
        let rise_tau = std::array::from_fn(|_| std::array::from_fn(|_| rng.gen_range(params.rise_tau_lo..params.rise_tau_hi)));
        SubjectProfile {
            subject_id: subject_id.into(),
            baseline,
            activation,
            rise_tau,
            decay_tau: params.decay_tau,
            noise: params.noise,
            noise_prop: params.noise_prop,
            drift_rate: rng.gen_range(params.drift_lo..params.drift_hi),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.activation.iter().flatten().any(|&a| !(a >= 0.0));
        let bad_tau = self.rise_tau.iter().flatten().any(|&t| !(t > 0.0)) || !(self.decay_tau > 0.0);
        if bad || bad_tau || !(self.noise >= 0.0) || !(self.noise_prop >= 0.0) {
            return Err(Error::invalid(format!(
                "profile {}: amplitudes and noise must be nonnegative, time constants positive",
                self.subject_id
            )));
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        let mut s = format!("version={PROFILE_VERSION}\nsubject_id={}\nseed={}\n", self.subject_id, self.seed);
        let _ = writeln!(s, "baseline={}", list(&self.baseline));
        for i in Intent::ALL {
            let _ = writeln!(s, "activation.{i}={}", list(&self.activation[i.index()]));
            let _ = writeln!(s, "rise_tau.{i}={}", list(&self.rise_tau[i.index()]));
        }
        let _ = writeln!(s, "decay_tau={}\nnoise={}\nnoise_prop={}\ndrift_rate={}", self.decay_tau, self.noise, self.noise_prop, self.drift_rate);
        s
    }

    pub fn from_kv(path: &Path, text: &str) -> Result<Self> {
        let kv = io::parse_kv(path, text)?;
        let find = |k: &str| -> Result<(&str, usize)> {
            kv.iter()
                .find(|(key, _, _)| key == k)
                .map(|(_, v, l)| (v.as_str(), *l))
                .ok_or_else(|| Error::parse(path, 0, format!("missing key {k}")))
        };
        let num = |k: &str| -> Result<f64> {
            let (v, l) = find(k)?;
            v.parse().map_err(|_| Error::parse(path, l, format!("{k}: {v:?} is not a number")))
        };
        let arr = |k: &str| -> Result<[f64; CHANNELS]> {
            let (v, l) = find(k)?;
            let xs: Vec<f64> = v
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, l, format!("{k}: bad number list")))?;
            xs.try_into()
                .map_err(|_| Error::parse(path, l, format!("{k}: expected {CHANNELS} values")))
        };
        let (version, vl) = find("version")?;
        if version != PROFILE_VERSION.to_string() {
            return Err(Error::parse(path, vl, format!("profile version {version} is not supported")));
        }
        let mut activation = [[0.0; CHANNELS]; 3];
        let mut rise_tau = [[0.0; CHANNELS]; 3];
        for i in Intent::ALL {
            activation[i.index()] = arr(&format!("activation.{i}"))?;
            rise_tau[i.index()] = arr(&format!("rise_tau.{i}"))?;
        }
        let (seed, sl) = find("seed")?;
        let p = SubjectProfile {
            subject_id: find("subject_id")?.0.to_string(),
            baseline: arr("baseline")?,
            activation,
            rise_tau,
            decay_tau: num("decay_tau")?,
            noise: num("noise")?,
            noise_prop: num("noise_prop")?,
            drift_rate: num("drift_rate")?,
            seed: seed.parse().map_err(|_| Error::parse(path, sl, "bad seed"))?,
        };
        p.validate()?;
        Ok(p)
    }
}

/// How arm support and motor assistance alter a subject's signals.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEffect {
    /// Multiplicative gain applied when the arm is off the table.
    pub arm_off_gain: [f64; CHANNELS],
    /// Tonic activity added when the arm is held up.
    pub arm_off_tone: [f64; CHANNELS],
    /// Additive burst when the motor moves, about one second after each movement cue.
    pub motor_burst: [f64; CHANNELS],
    pub motor_delay_frames: usize,
    pub motor_duration_frames: usize,
}

impl ConditionEffect {
    pub fn random(params: &SimParams, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ConditionEffect {
            arm_off_gain: std::array::from_fn(|_| rng.gen_range(params.arm_gain_lo..params.arm_gain_hi)),
            arm_off_tone: std::array::from_fn(|_| rng.gen_range(0.0..params.arm_tone.max(f64::MIN_POSITIVE))),
            motor_burst: std::array::from_fn(|_| rng.gen_range(0.0..params.motor_burst.max(f64::MIN_POSITIVE))),
            motor_delay_frames: (params.motor_delay_s * SAMPLE_RATE_HZ as f64).round() as usize,
            motor_duration_frames: (params.motor_duration_s * SAMPLE_RATE_HZ as f64).round() as usize,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.arm_off_gain.iter().any(|&g| !(g > 0.0)) {
            return Err(Error::invalid("condition gains must be positive"));
        }
        Ok(())
    }
}

/// Cue track: relax lead-in, then `(open, relax, close, relax)` × 3.
pub fn protocol_labels(params: &SimParams) -> Vec<Intent> {
    let mut l = vec![Intent::Relax; params.lead_in_frames];
    for _ in 0..MOTIONS_PER_RECORDING {
        for i in [Intent::Open, Intent::Relax, Intent::Close, Intent::Relax] {
            l.extend(std::iter::repeat(i).take(params.cue_frames));
        }
    }
    l
}

/// Raw (pre-filter, pre-quantization) samples for one recording.
pub fn simulate_raw(
    profile: &SubjectProfile,
    effect: &ConditionEffect,
    condition: Condition,
    session_index: u32,
    params: &SimParams,
    seed: u64,
) -> Result<(Vec<[f64; CHANNELS]>, Vec<Intent>)> {
    profile.validate()?;
    effect.validate()?;
    let labels = protocol_labels(params);
    let n = labels.len();
    let dt = 1.0 / SAMPLE_RATE_HZ as f64;

    // Session-level redraws: amplitude perturbation and drift.
    let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, &[0x5e55, u64::from(session_index)]));
    let jitter = params.session_jitter.max(0.0);
    let session_gain: [f64; CHANNELS] = std::array::from_fn(|_| 1.0 + srng.gen_range(-jitter..=jitter));
    let drift = if session_index == 1 {
        profile.drift_rate
    } else {
        srng.gen_range(params.drift_lo.min(params.drift_hi)..=params.drift_hi.max(params.drift_lo))
    };

    let arm_off = condition.arm == ArmPosition::OffTable;
    let motor_on = condition.motor == MotorState::On;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut envelope: [f64; CHANNELS] = profile.activation[Intent::Relax.index()];
    let mut cue_start = 0usize;
    let mut raw = Vec::with_capacity(n);
    for t in 0..n {
        let intent = labels[t];
        if t > 0 && labels[t - 1] != intent {
            cue_start = t;
        }
        let progress = t as f64 / n as f64;
        let since_cue = t - cue_start;
        let burst_active = motor_on
            && intent != Intent::Relax
            && since_cue >= effect.motor_delay_frames
            && since_cue < effect.motor_delay_frames + effect.motor_duration_frames;
        let mut frame = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            let target = profile.activation[intent.index()][c];
            let tau = if target > envelope[c] {
                profile.rise_tau[intent.index()][c]
            } else {
                profile.decay_tau
            };
            envelope[c] += (target - envelope[c]) * (1.0 - (-dt / tau).exp());
            let mut gain = session_gain[c] * (1.0 + drift * progress);
            let mut v = profile.baseline[c];
            if arm_off {
                gain *= effect.arm_off_gain[c];
                v += effect.arm_off_tone[c];
            }
            v += gain * envelope[c];
            if burst_active {
                v += effect.motor_burst[c];
            }
            let sd = profile.noise + profile.noise_prop * gain * envelope[c];
            v += sd * std_normal.sample(&mut rng);
            frame[c] = v;
        }
        raw.push(frame);
    }
    Ok((raw, labels))
}

/// One protocol recording, median filtered and quantized.
pub fn simulate_recording(
    profile: &SubjectProfile,
    effect: &ConditionEffect,
    meta: RecordingMeta,
    params: &SimParams,
    seed: u64,
) -> Result<Recording> {
    let (raw, labels) = simulate_raw(profile, effect, meta.condition, meta.session_index, params, seed)?;
    let frames = preprocess(&raw, DEFAULT_MEDIAN_WIDTH, RawRange::default())?;
    Recording::new(frames, labels, meta)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub n_subjects: usize,
    pub n_sessions: usize,
    pub conditions: Vec<Condition>,
    pub recordings_per_condition: usize,
    pub master_seed: u64,
    pub params: SimParams,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_subjects: 5,
            n_sessions: 2,
            conditions: Condition::ALL.to_vec(),
            recordings_per_condition: 2,
            master_seed: 0,
            params: SimParams::default(),
        }
    }
}

impl CorpusSpec {
    pub fn profile(&self, subject: usize) -> SubjectProfile {
        SubjectProfile::random(
            format!("S{subject}"),
            &self.params,
            derive_seed(self.master_seed, &[0x5b, subject as u64]),
        )
    }

    pub fn condition_effect(&self, subject: usize) -> ConditionEffect {
        ConditionEffect::random(&self.params, derive_seed(self.master_seed, &[0xc0, subject as u64]))
    }
}

/// Every (subject, session, condition, recording) combination, subjects numbered from 1.
pub fn simulate_corpus(spec: &CorpusSpec) -> Result<Vec<Recording>> {
    if spec.n_subjects == 0 || spec.n_sessions == 0 || spec.conditions.is_empty() || spec.recordings_per_condition == 0 {
        return Err(Error::invalid("corpus counts must be positive"));
    }
    if spec.n_sessions > 2 {
        return Err(Error::invalid("at most two sessions are supported"));
    }
    let mut out = Vec::new();
    for s in 1..=spec.n_subjects {
        let profile = spec.profile(s);
        let effect = spec.condition_effect(s);
        for session in 1..=spec.n_sessions as u32 {
            for (ci, &condition) in spec.conditions.iter().enumerate() {
                for r in 1..=spec.recordings_per_condition as u32 {
                    let meta = RecordingMeta {
                        subject_id: profile.subject_id.clone(),
                        session_index: session,
                        condition,
                        recording_index: r,
                    };
                    let seed = derive_seed(spec.master_seed, &[s as u64, u64::from(session), ci as u64, u64::from(r)]);
                    out.push(simulate_recording(&profile, &effect, meta, &spec.params, seed)?);
                }
            }
        }
    }
    Ok(out)
}

/// Writes recordings, manifests and per-subject profile files under `dir`.
pub fn write_corpus(dir: &Path, spec: &CorpusSpec, recordings: &[Recording]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for rec in recordings {
        io::write_recording(dir, rec)?;
    }
    let pdir = dir.join("profiles");
    std::fs::create_dir_all(&pdir).map_err(|e| Error::io(&pdir, e))?;
    io::write_string(&pdir.join("simulator.profile"), &spec.params.to_kv())?;
    for s in 1..=spec.n_subjects {
        let p = spec.profile(s);
        io::write_string(&pdir.join(format!("{}.profile", p.subject_id)), &p.to_kv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{segment_windows, Segment};
    use std::collections::HashMap;

    #[test]
    fn shipped_profile_is_the_default() {
        let p = SimParams::from_kv_str(Path::new("simulator_v1.profile"), DEFAULT_PROFILE).unwrap();
        assert_eq!(p, SimParams::default());
        assert_eq!(DEFAULT_PROFILE, SimParams::default().to_kv());
    }

    #[test]
    fn protocol_shape() {
        let spec = CorpusSpec::default();
        let rec = simulate_recording(
            &spec.profile(1),
            &spec.condition_effect(1),
            RecordingMeta {
                subject_id: "S1".into(),
                session_index: 1,
                condition: Condition::ALL[1],
                recording_index: 1,
            },
            &spec.params,
            42,
        )
        .unwrap();
        assert_eq!(rec.len(), 500 + 3 * 4 * 500);
        assert_eq!(rec.len(), 6500);
        let segs: Vec<Segment> = rec.segments();
        let opens: Vec<_> = segs.iter().filter(|s| s.intent == Intent::Open).collect();
        let closes: Vec<_> = segs.iter().filter(|s| s.intent == Intent::Close).collect();
        assert_eq!(opens.len(), 3);
        assert_eq!(closes.len(), 3);
        assert!(opens.iter().chain(&closes).all(|s| s.len() == 500));
        let (sup, q) = crate::signal::split_support_query(&rec).unwrap();
        assert_eq!(sup.len(), 2500);
        assert_eq!(q.len(), 4000);
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = CorpusSpec {
            n_subjects: 1,
            n_sessions: 1,
            conditions: vec![Condition::ALL[0]],
            recordings_per_condition: 1,
            ..Default::default()
        };
        assert_eq!(simulate_corpus(&spec).unwrap(), simulate_corpus(&spec).unwrap());
        let other = CorpusSpec { master_seed: 1, ..spec.clone() };
        assert_ne!(simulate_corpus(&spec).unwrap(), simulate_corpus(&other).unwrap());
    }

    #[test]
    fn default_corpus_metadata() {
        let spec = CorpusSpec {
            params: SimParams {
                lead_in_frames: 40,
                cue_frames: 40,
                ..Default::default()
            },
            ..Default::default()
        };
        let corpus = simulate_corpus(&spec).unwrap();
        assert_eq!(corpus.len(), 80);
        let mut seen: HashMap<(String, u32, Condition), usize> = HashMap::new();
        for r in &corpus {
            let m = r.meta();
            *seen.entry((m.subject_id.clone(), m.session_index, m.condition)).or_default() += 1;
        }
        assert_eq!(seen.len(), 5 * 2 * 4);
        assert!(seen.values().all(|&c| c == 2));
    }

    #[test]
    fn envelopes_are_causal() {
        // Changing what happens after a cue must not alter any earlier sample.
        let spec = CorpusSpec::default();
        let p = spec.profile(2);
        let mut q = p.clone();
        q.activation[Intent::Close.index()] = [300.0; CHANNELS];
        let e = spec.condition_effect(2);
        let (a, labels) = simulate_raw(&p, &e, Condition::ALL[3], 1, &spec.params, 1).unwrap();
        let (b, _) = simulate_raw(&q, &e, Condition::ALL[3], 1, &spec.params, 1).unwrap();
        let first_close = labels.iter().position(|&l| l == Intent::Close).unwrap();
        assert_eq!(a[..first_close], b[..first_close]);
        assert_ne!(a[first_close + 50], b[first_close + 50]);
    }

    #[test]
    fn profiles_round_trip() {
        let spec = CorpusSpec::default();
        let p = spec.profile(3);
        assert_eq!(SubjectProfile::from_kv(Path::new("p"), &p.to_kv()).unwrap(), p);
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("sim.profile");
        std::fs::write(&f, spec.params.to_kv()).unwrap();
        assert_eq!(SimParams::from_kv_file(&f).unwrap(), spec.params);
        std::fs::write(&f, "version=9\n").unwrap();
        assert!(SimParams::from_kv_file(&f).is_err());
    }

    #[test]
    fn windows_cover_each_intent() {
        let spec = CorpusSpec::default();
        let meta = RecordingMeta {
            subject_id: "S1".into(),
            session_index: 2,
            condition: Condition::ALL[3],
            recording_index: 2,
        };
        let rec = simulate_recording(&spec.profile(1), &spec.condition_effect(1), meta, &spec.params, 5).unwrap();
        let w = segment_windows(&rec, 256, 10).unwrap();
        for i in Intent::ALL {
            assert!(w.iter().any(|x| x.intent == i));
        }
    }
}
