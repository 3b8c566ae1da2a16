//! Config-driven orchestration of every stage, from synthetic events to the
//! deployment description. Artifacts land under `out_dir`; each stage also
//! writes `provenance/<stage>.toml` with the config hash, the seed and the
//! SHA-256 of every artifact it produced.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augmentation::{augment_dataset, AugmentPlan};
use crate::deployment::{describe, estimate, plan_memory, PlatformProfile};
use crate::error::{Error, Result};
use crate::evaluation::{emit_heatmap, evaluate, EvalMode, EvalModel, EvalOptions};
use crate::event_io::{synth_eye_sequence, EyelidBand, SynthParams, Trajectory};
use crate::event_io::{read_events, read_labels, write_events, write_labels, EventFormat, SENSOR_HEIGHT, SENSOR_WIDTH};
use crate::event_io::{EventStream, LabelTrack};
use crate::framing::{
    accumulate_frames, align_and_crop, attach_labels, compute_user_roi, read_samples, write_samples, Sample,
};
use crate::network::{
    canonical_spec_with, read_checkpoint, train, write_checkpoint, Head, NetworkSpec, Shape, TrainConfig,
    DEFAULT_INPUT_EXPONENT,
};
use crate::quantization::{
    lower, qat_train, quantize_params, read_integer_model, weight_size_bytes, write_integer_model, PresetRegistry,
    QuantPreset, QuantState,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Where `synth` writes and `frame` reads `user_<id>.evt` / `user_<id>.labels.csv`.
    /// Defaults to `<out_dir>/events`.
    pub events_dir: Option<PathBuf>,
    pub users: Vec<u32>,
    /// Frame slots simulated per user.
    pub frames_per_user: usize,
    pub pupil_radius: [f64; 2],
    pub edge_rate: f64,
    pub noise_rate: f64,
    pub eyelid_rate: f64,
    /// Half extent of pupil motion around the eye center, pixels.
    pub motion_extent: [f64; 2],
    /// Pursuit speed range, pixels per second.
    pub pursuit_speed: [f64; 2],
    pub saccade_probability: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            events_dir: None,
            users: vec![5, 10, 15, 18, 19, 20],
            frames_per_user: 1667,
            pupil_radius: [9.0, 13.0],
            edge_rate: 10.0,
            noise_rate: 2_000.0,
            eyelid_rate: 5_000.0,
            motion_extent: [62.0, 30.0],
            pursuit_speed: [90.0, 250.0],
            saccade_probability: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FramingConfig {
    pub window_us: u64,
    pub min_events: u32,
    pub roi_coverage: f64,
}

impl Default for FramingConfig {
    fn default() -> Self {
        FramingConfig {
            window_us: crate::framing::DEFAULT_WINDOW_US,
            min_events: crate::framing::DEFAULT_MIN_EVENTS,
            roi_coverage: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub shift_range: i32,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            enabled: true,
            shift_range: crate::augmentation::DEFAULT_SHIFT_RANGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub head: Head,
    pub fc1: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            head: Head::Regression,
            fc1: crate::network::DEFAULT_FC1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub train_users: Vec<u32>,
    pub val_users: Vec<u32>,
    pub test_users: Vec<u32>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch: t.batch,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            eps: t.eps,
            train_users: t.train_users,
            val_users: t.val_users,
            test_users: vec![5, 15],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QatSection {
    pub presets: Vec<String>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub calib_size: usize,
}

impl Default for QatSection {
    fn default() -> Self {
        QatSection {
            presets: vec!["EETnetR8".into(), "EETnetR4".into()],
            epochs: 5,
            batch: 32,
            lr: 1e-4,
            calib_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeploySection {
    pub preset: String,
    /// Built-in profile name or a path to a profile file.
    pub profile: String,
}

impl Default for DeploySection {
    fn default() -> Self {
        DeploySection {
            preset: "EETnetR8".into(),
            profile: "max78000-like".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Modes run for every quantized preset; the float model is always
    /// evaluated in float mode.
    pub modes: Vec<String>,
    pub deg_per_px: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            modes: vec!["integer".into()],
            deg_per_px: crate::evaluation::DEFAULT_DEG_PER_PX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub framing: FramingConfig,
    pub augment: AugmentConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub qat: QatSection,
    pub deploy: DeploySection,
    pub eval: EvalSection,
    /// User-defined presets, added to the built-in ten.
    pub presets: Vec<QuantPreset>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            out_dir: PathBuf::from("eetnet-run"),
            data: DataConfig::default(),
            framing: FramingConfig::default(),
            augment: AugmentConfig::default(),
            model: ModelConfig::default(),
            train: TrainSection::default(),
            qat: QatSection::default(),
            deploy: DeploySection::default(),
            eval: EvalSection::default(),
            presets: Vec::new(),
        }
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative `out_dir` and `events_dir` resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let Some(base) = path.parent() {
            if cfg.out_dir.is_relative() {
                cfg.out_dir = base.join(&cfg.out_dir);
            }
            if let Some(d) = cfg.data.events_dir.as_mut() {
                if d.is_relative() {
                    *d = base.join(&*d);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the serialized config, excluding the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.data.events_dir = None;
        hex(&Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn registry(&self) -> Result<PresetRegistry> {
        let mut reg = PresetRegistry::default();
        for p in &self.presets {
            reg.add(p.clone())?;
        }
        Ok(reg)
    }

    pub fn spec(&self) -> NetworkSpec {
        canonical_spec_with(self.model.head, self.model.fc1)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch: self.train.batch,
            lr: self.train.lr,
            beta1: self.train.beta1,
            beta2: self.train.beta2,
            eps: self.train.eps,
            seed: self.seed,
            train_users: self.train.train_users.clone(),
            val_users: self.train.val_users.clone(),
            input_exponent: DEFAULT_INPUT_EXPONENT,
        }
    }

    /// Checks names and splits before any stage runs.
    pub fn validate(&self) -> Result<()> {
        let reg = self.registry()?;
        for p in self.qat.presets.iter().chain(std::iter::once(&self.deploy.preset)) {
            reg.get(p)?;
        }
        PlatformProfile::resolve(&self.deploy.profile)?;
        for m in &self.eval.modes {
            EvalMode::parse(m)?;
        }
        for (what, users) in [
            ("train", &self.train.train_users),
            ("val", &self.train.val_users),
            ("test", &self.train.test_users),
        ] {
            if let Some(u) = users.iter().find(|u| !self.data.users.contains(u)) {
                return Err(Error::Config(format!("{what} user {u} is not in data.users")));
            }
        }
        let splits = [&self.train.train_users, &self.train.val_users, &self.train.test_users];
        for (i, a) in splits.iter().enumerate() {
            for b in &splits[i + 1..] {
                if let Some(u) = a.iter().find(|u| b.contains(u)) {
                    return Err(Error::Config(format!("user {u} appears in two splits")));
                }
            }
        }
        if self.train.train_users.is_empty() || self.train.test_users.is_empty() {
            return Err(Error::Config("train and test splits must be non-empty".into()));
        }
        Ok(())
    }

    fn events_dir(&self) -> PathBuf {
        self.data.events_dir.clone().unwrap_or_else(|| self.out_dir.join("events"))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(std::fs::read(path).map_err(|e| Error::io(path, e))?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Synth,
    Frame,
    Augment,
    Train,
    Qat,
    Quantize,
    Eval,
    Plan,
    Export,
    Estimate,
    All,
}

impl Command {
    pub const STAGES: [Command; 10] = [
        Command::Synth,
        Command::Frame,
        Command::Augment,
        Command::Train,
        Command::Qat,
        Command::Quantize,
        Command::Eval,
        Command::Plan,
        Command::Export,
        Command::Estimate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Frame => "frame",
            Command::Augment => "augment",
            Command::Train => "train",
            Command::Qat => "qat",
            Command::Quantize => "quantize",
            Command::Eval => "eval",
            Command::Plan => "plan",
            Command::Export => "export",
            Command::Estimate => "estimate",
            Command::All => "all",
        }
    }
}

/// Runs a stage (or all of them) and returns the artifacts written.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    /// Restricts `eval` to one mode when set.
    pub eval_mode: Option<EvalMode>,
    /// `estimate` on a network with no layers (input load only).
    pub estimate_input_only: bool,
    /// Suppresses progress lines on stderr; reports on stdout still print.
    pub quiet: bool,
    written: Vec<PathBuf>,
}

fn user_file(dir: &Path, user: u32, suffix: &str) -> PathBuf {
    dir.join(format!("user_{user}.{suffix}"))
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Synthesizes one user's stream: a per-user pupil size, eye position and
/// motion path, with uniform and eyelid noise.
pub fn synth_user(data: &DataConfig, window_us: u64, user: u32, seed: u64) -> Result<(EventStream, LabelTrack)> {
    let user_seed = seed ^ (user as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(user_seed);
    let radius = rng.random_range(data.pupil_radius[0]..=data.pupil_radius[1]);
    let (ex, ey) = (data.motion_extent[0], data.motion_extent[1]);
    let (sw, sh) = (SENSOR_WIDTH as f64, SENSOR_HEIGHT as f64);
    let slack_x = (sw / 2.0 - ex - radius - 2.0).max(0.0);
    let slack_y = (sh / 2.0 - ey - radius - 2.0).max(0.0);
    let cx = sw / 2.0 + rng.random_range(-slack_x.min(40.0)..=slack_x.min(40.0));
    let cy = sh / 2.0 + rng.random_range(-slack_y.min(30.0)..=slack_y.min(30.0));
    let duration = data.frames_per_user as u64 * window_us;
    let trajectory = Trajectory::random_eye_motion(
        rng.random(),
        (cx, cy),
        (ex, ey),
        duration,
        (data.pursuit_speed[0], data.pursuit_speed[1]),
        data.saccade_probability,
    );
    let mut params = SynthParams::new(SENSOR_WIDTH, SENSOR_HEIGHT, duration, trajectory);
    params.pupil_radius = radius;
    params.edge_rate = data.edge_rate;
    params.noise_rate = data.noise_rate;
    params.eyelid_rate = data.eyelid_rate;
    params.eyelid_band = EyelidBand {
        x0: cx - ex - radius,
        x1: cx + ex + radius,
        y0: cy - ey - radius - 6.0,
        y1: cy - ey - radius,
    };
    synth_eye_sequence(&params, rng.random())
}

/// Frames one user's stream and crops it to the user's ROI.
pub fn frame_user(stream: &EventStream, track: &LabelTrack, framing: &FramingConfig, user: u32) -> Result<Vec<Sample>> {
    let frames = accumulate_frames(stream, framing.window_us, framing.min_events)?;
    let roi = compute_user_roi(&frames, framing.roi_coverage)?.roi;
    let cropped = frames
        .iter()
        .map(|f| align_and_crop(f, &roi))
        .collect::<Result<Vec<_>>>()?;
    Ok(attach_labels(&cropped, track, &roi, user))
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        Pipeline {
            cfg,
            eval_mode: None,
            estimate_input_only: false,
            quiet: false,
            written: Vec::new(),
        }
    }

    fn dir(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn note(&self, msg: &str) {
        if !self.quiet {
            eprintln!("[eetnet] {msg}");
        }
    }

    fn wrote(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    pub fn run(&mut self, cmd: Command) -> Result<Vec<PathBuf>> {
        self.cfg.validate()?;
        self.written.clear();
        let stages: Vec<Command> = if cmd == Command::All {
            Command::STAGES.to_vec()
        } else {
            vec![cmd]
        };
        let mut all = Vec::new();
        for stage in stages {
            let start = Instant::now();
            self.written.clear();
            match stage {
                Command::Synth => self.synth()?,
                Command::Frame => self.frame()?,
                Command::Augment => self.augment()?,
                Command::Train => self.train()?,
                Command::Qat => self.qat()?,
                Command::Quantize => self.quantize()?,
                Command::Eval => self.eval()?,
                Command::Plan => self.plan()?,
                Command::Export => self.export()?,
                Command::Estimate => self.estimate()?,
                Command::All => unreachable!(),
            }
            self.record_provenance(stage)?;
            all.append(&mut self.written);
            self.note(&format!("{} done in {:.1}s", stage.name(), start.elapsed().as_secs_f64()));
        }
        Ok(all)
    }

    fn synth(&mut self) -> Result<()> {
        let dir = self.cfg.events_dir();
        mkdir(&dir)?;
        for user in self.cfg.data.users.clone() {
            let (stream, track) = synth_user(&self.cfg.data, self.cfg.framing.window_us, user, self.cfg.seed)?;
            let ev = user_file(&dir, user, "evt");
            write_events(&stream, &ev, EventFormat::Binary)?;
            let lab = user_file(&dir, user, "labels.csv");
            write_labels(&track, &lab)?;
            self.note(&format!("user {user}: {} events", stream.len()));
            self.wrote(ev);
            self.wrote(lab);
        }
        Ok(())
    }

    fn frame(&mut self) -> Result<()> {
        let src = self.cfg.events_dir();
        let dir = self.dir("frames");
        mkdir(&dir)?;
        for user in self.cfg.data.users.clone() {
            let ev = user_file(&src, user, "evt");
            let stream = read_events(&ev, EventFormat::from_path(&ev, SENSOR_WIDTH, SENSOR_HEIGHT))?;
            let track = read_labels(&user_file(&src, user, "labels.csv"))?;
            let samples = frame_user(&stream, &track, &self.cfg.framing, user)?;
            let (f, c) = (user_file(&dir, user, "frm"), user_file(&dir, user, "csv"));
            write_samples(&samples, &f, &c)?;
            self.note(&format!("user {user}: {} frames", samples.len()));
            self.wrote(f);
            self.wrote(c);
        }
        Ok(())
    }

    fn load_users(&self, dir: &Path, users: &[u32]) -> Result<Vec<Sample>> {
        let mut out = Vec::new();
        for &u in users {
            out.extend(read_samples(&user_file(dir, u, "frm"), &user_file(dir, u, "csv"), u)?);
        }
        Ok(out)
    }

    fn augment(&mut self) -> Result<()> {
        if !self.cfg.augment.enabled {
            self.note("augmentation disabled");
            return Ok(());
        }
        let dir = self.dir("augmented");
        mkdir(&dir)?;
        for user in self.cfg.train.train_users.clone() {
            let samples = self.load_users(&self.dir("frames"), &[user])?;
            let mut plan = AugmentPlan::new(self.cfg.seed ^ user as u64);
            plan.shift_range = self.cfg.augment.shift_range;
            let aug = augment_dataset(&samples, &plan);
            let (f, c) = (user_file(&dir, user, "frm"), user_file(&dir, user, "csv"));
            write_samples(&aug, &f, &c)?;
            self.wrote(f);
            self.wrote(c);
        }
        Ok(())
    }

    /// Training users (augmented when enabled) plus validation users.
    fn training_samples(&self) -> Result<Vec<Sample>> {
        let train_dir = if self.cfg.augment.enabled {
            self.dir("augmented")
        } else {
            self.dir("frames")
        };
        let mut s = self.load_users(&train_dir, &self.cfg.train.train_users)?;
        s.extend(self.load_users(&self.dir("frames"), &self.cfg.train.val_users)?);
        Ok(s)
    }

    fn train(&mut self) -> Result<()> {
        let spec = self.cfg.spec();
        let samples = self.training_samples()?;
        let (params, log) = train(&spec, &samples, &self.cfg.train_config())?;
        if let Some(e) = log.epochs.last() {
            self.note(&format!("train loss {:.6}, val loss {:?}", e.train_loss, e.val_loss));
        }
        let dir = self.dir("model");
        mkdir(&dir)?;
        let (ck, lg) = (dir.join("float.eetf"), dir.join("train_log.csv"));
        write_checkpoint(&ck, &spec, &params)?;
        write_text(&lg, &log.to_csv())?;
        self.wrote(ck);
        self.wrote(lg);
        Ok(())
    }

    fn qat(&mut self) -> Result<()> {
        let (spec, params) = read_checkpoint(&self.dir("model").join("float.eetf"))?;
        let samples = self.training_samples()?;
        let reg = self.cfg.registry()?;
        let dir = self.dir("qat");
        mkdir(&dir)?;
        let mut cfg = self.cfg.train_config();
        cfg.epochs = self.cfg.qat.epochs;
        cfg.batch = self.cfg.qat.batch;
        cfg.lr = self.cfg.qat.lr;
        for name in self.cfg.qat.presets.clone() {
            let preset = reg.get(&name)?;
            let res = qat_train(&spec, params.clone(), &samples, preset, &cfg, self.cfg.qat.calib_size)?;
            let ck = dir.join(format!("{name}.eetf"));
            let st = dir.join(format!("{name}.quant.toml"));
            let lg = dir.join(format!("{name}.log.csv"));
            write_checkpoint(&ck, &spec, &res.params)?;
            write_text(&st, &toml::to_string(&res.state).map_err(|e| Error::Invariant(e.to_string()))?)?;
            write_text(&lg, &res.log.to_csv())?;
            self.note(&format!("{name}: final loss {:?}", res.log.final_train_loss()));
            self.wrote(ck);
            self.wrote(st);
            self.wrote(lg);
        }
        Ok(())
    }

    fn quantize(&mut self) -> Result<()> {
        let dir = self.dir("quant");
        mkdir(&dir)?;
        for name in self.cfg.qat.presets.clone() {
            let (spec, params) = read_checkpoint(&self.dir("qat").join(format!("{name}.eetf")))?;
            let state: QuantState = toml::from_str(&read_text(&self.dir("qat").join(format!("{name}.quant.toml")))?)
                .map_err(|e| Error::malformed(format!("{name}.quant.toml"), e.to_string()))?;
            let (q, lq) = quantize_params(&spec, &params, &state)?;
            let model = lower(&spec, &q, &lq, state.input_exponent)?;
            let path = dir.join(format!("{name}.eetq"));
            write_integer_model(&path, &model)?;
            self.wrote(path);
        }
        Ok(())
    }

    fn eval(&mut self) -> Result<()> {
        let test = self.load_users(&self.dir("frames"), &self.cfg.train.test_users)?;
        let dir = self.dir("eval");
        mkdir(&dir)?;
        let opts = EvalOptions {
            deg_per_px: self.cfg.eval.deg_per_px,
            ..EvalOptions::default()
        };
        let modes: Vec<EvalMode> = match self.eval_mode {
            Some(m) => vec![m],
            None => self.cfg.eval.modes.iter().map(|m| EvalMode::parse(m)).collect::<Result<_>>()?,
        };
        let mut jobs = Vec::new();
        let float_ck = self.dir("model").join("float.eetf");
        if modes.contains(&EvalMode::Float) || self.eval_mode.is_none() {
            let (spec, params) = read_checkpoint(&float_ck)?;
            let r = evaluate(EvalModel::Float { spec: &spec, params: &params }, &test, EvalMode::Float, &opts)?;
            jobs.push(("float".to_string(), r));
        }
        let quantized = modes.iter().any(|&m| m != EvalMode::Float);
        for name in self.cfg.qat.presets.iter().filter(|_| quantized) {
            let model = read_integer_model(&self.dir("quant").join(format!("{name}.eetq")))?;
            for &m in &modes {
                if m == EvalMode::Float {
                    continue;
                }
                let r = evaluate(EvalModel::Quantized(&model), &test, m, &opts)?;
                jobs.push((format!("{name}.{}", m.name()), r));
            }
        }
        for (stem, r) in jobs {
            self.note(&format!("{stem}: mean pixel distance {:.3} px", r.mean_pixel_distance));
            let (csv, txt) = (dir.join(format!("{stem}.csv")), dir.join(format!("{stem}.summary.toml")));
            write_text(&csv, &r.render_csv())?;
            write_text(&txt, &r.render_summary())?;
            self.wrote(csv);
            self.wrote(txt);
        }
        let hm = dir.join("heatmap.csv");
        emit_heatmap(&test, &hm)?;
        self.wrote(hm);
        Ok(())
    }

    fn deploy_model(&self) -> Result<crate::quantization::IntegerModel> {
        read_integer_model(&self.dir("quant").join(format!("{}.eetq", self.cfg.deploy.preset)))
    }

    fn plan(&mut self) -> Result<()> {
        let model = self.deploy_model()?;
        let profile = PlatformProfile::resolve(&self.cfg.deploy.profile)?;
        let plan = plan_memory(&model.spec, &profile)?;
        let mut o = String::new();
        let _ = writeln!(o, "profile = \"{}\"", profile.name);
        let _ = writeln!(o, "peak_bytes = {}", plan.peak_bytes);
        let offsets: Vec<String> = plan.offsets.iter().map(usize::to_string).collect();
        let _ = writeln!(o, "offsets = [{}]", offsets.join(", "));
        let procs: Vec<String> = plan.processors.iter().map(|r| format!("[{}, {}]", r.start, r.len())).collect();
        let _ = writeln!(o, "processors = [{}]", procs.join(", "));
        let dir = self.dir("deploy");
        mkdir(&dir)?;
        let path = dir.join(format!("{}.plan.toml", self.cfg.deploy.preset));
        write_text(&path, &o)?;
        self.wrote(path);
        Ok(())
    }

    fn export(&mut self) -> Result<()> {
        let model = self.deploy_model()?;
        let profile = PlatformProfile::resolve(&self.cfg.deploy.profile)?;
        let plan = plan_memory(&model.spec, &profile)?;
        let dir = self.dir("deploy");
        mkdir(&dir)?;
        let path = dir.join(format!("{}.description.toml", self.cfg.deploy.preset));
        write_text(&path, &describe(&model, &plan)?.render())?;
        self.wrote(path);
        Ok(())
    }

    fn estimate(&mut self) -> Result<()> {
        let reg = self.cfg.registry()?;
        let preset = reg.get(&self.cfg.deploy.preset)?;
        let profile = PlatformProfile::resolve(&self.cfg.deploy.profile)?;
        let spec = if self.estimate_input_only {
            NetworkSpec {
                input: Shape::new(1, 45, 78),
                layers: Vec::new(),
                head: preset.head,
            }
        } else {
            self.cfg.spec()
        };
        let est = estimate(&spec, preset, &profile)?;
        let size = weight_size_bytes(&spec, preset)?;
        let text = format!("preset = \"{}\"\n{}", preset.name, est.render());
        debug_assert_eq!(size.total, est.weight_bytes);
        print!("{text}");
        let dir = self.dir("deploy");
        mkdir(&dir)?;
        let name = if self.estimate_input_only { "input-only" } else { &preset.name };
        let path = dir.join(format!("{name}.estimate.toml"));
        write_text(&path, &text)?;
        self.wrote(path);
        Ok(())
    }

    fn record_provenance(&mut self, stage: Command) -> Result<()> {
        let mut artifacts = BTreeMap::new();
        for p in &self.written {
            let key = p
                .strip_prefix(&self.cfg.out_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/");
            artifacts.insert(key, sha256_file(p)?);
        }
        let prov = Provenance {
            stage: stage.name().to_string(),
            config_sha256: self.cfg.hash(),
            seed: self.cfg.seed,
            artifacts,
        };
        let dir = self.dir("provenance");
        mkdir(&dir)?;
        let path = dir.join(format!("{}.toml", stage.name()));
        write_text(&path, &toml::to_string(&prov).map_err(|e| Error::Invariant(e.to_string()))?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    pub config_sha256: String,
    pub seed: u64,
    pub artifacts: BTreeMap<String, String>,
}

pub fn preset_list(cfg: &PipelineConfig) -> Result<Vec<String>> {
    Ok(cfg.registry()?.names().into_iter().map(str::to_string).collect())
}
