//! Plain-text file formats: datasets, hidden-state sidecars, models,
//! policies and `key = value` configuration files.
//!
//! Every real is written with 17 significant digits, which round-trips an
//! `f64` exactly.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::env::{Action, CarState, ObsMode, Trajectory, WARMUP_STEPS};
use crate::error::{Error, Result};
use crate::latent_model::{AffineTanh, DecoderParams, DynamicsParams, LatentTrajectory, Matrix, Model};
use crate::rcpi::LinearPolicy;

/// A collected dataset as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub mode: ObsMode,
    pub t_max: usize,
    pub episodes: Vec<StoredEpisode>,
}

/// One trajectory with the warm-up that preceded it.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredEpisode {
    pub trajectory: Trajectory,
    pub warmup: Trajectory,
}

impl Dataset {
    pub fn trajectories(&self) -> Vec<Trajectory> {
        self.episodes.iter().map(|e| e.trajectory.clone()).collect()
    }
}

fn real(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

fn reals(out: &mut String, vs: &[f64]) {
    for (i, &v) in vs.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        real(out, v);
    }
    out.push('\n');
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Line cursor that skips blank lines and reports 1-based line numbers.
struct Cursor<'a> {
    path: PathBuf,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str, path: &Path) -> Self {
        Cursor {
            path: path.to_path_buf(),
            lines: text.lines().enumerate().peekable(),
            line: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn skip_blank(&mut self) {
        while self.lines.peek().is_some_and(|(_, l)| l.trim().is_empty()) {
            self.lines.next();
        }
    }

    fn tokens(&mut self, what: &str) -> Result<Vec<&'a str>> {
        self.skip_blank();
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l.split_whitespace().collect())
            }
            None => Err(self.err(format!("unexpected end of file, expected {what}"))),
        }
    }

    fn finish(mut self) -> Result<()> {
        self.skip_blank();
        if let Some((i, _)) = self.lines.next() {
            self.line = i + 1;
            return Err(self.err("trailing content"));
        }
        Ok(())
    }

    fn parse<T: FromStr>(&self, tok: &str, what: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(format!("invalid {what} `{tok}`")))
    }

    fn real(&self, tok: &str) -> Result<f64> {
        let v: f64 = self.parse(tok, "real")?;
        if !v.is_finite() {
            return Err(self.err(format!("non-finite value `{tok}`")));
        }
        Ok(v)
    }

    fn reals(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let toks = self.tokens(what)?;
        if toks.len() != count {
            return Err(self.err(format!("{what}: expected {count} values, found {}", toks.len())));
        }
        toks.iter().map(|t| self.real(t)).collect()
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let rows: Vec<Vec<f64>> = (0..rows).map(|_| self.reals(cols, what)).collect::<Result<_>>()?;
        Matrix::from_rows(&rows)
    }

    fn step(&mut self, m: usize, prefix: Option<&str>, traj: &mut Trajectory) -> Result<()> {
        let toks = self.tokens("a step line")?;
        let body = match prefix {
            Some(p) if toks.first() == Some(&p) => &toks[1..],
            Some(p) => return Err(self.err(format!("warm-up line must start with `{p}`"))),
            None => &toks[..],
        };
        if body.len() != m + 1 {
            return Err(self.err(format!("expected {m} observation values and an action index")));
        }
        let obs: Vec<f64> = body[..m].iter().map(|t| self.real(t)).collect::<Result<_>>()?;
        let index: usize = self.parse(body[m], "action index")?;
        let action = Action::from_index(index).ok_or_else(|| self.err(format!("action index {index} out of range")))?;
        traj.push(&obs, action);
        Ok(())
    }
}

fn write_steps(out: &mut String, traj: &Trajectory, prefix: &str) {
    for (o, a) in traj.steps() {
        out.push_str(prefix);
        for v in o {
            real(out, *v);
            out.push(' ');
        }
        writeln!(out, "{}", a.index()).expect("writing to a String cannot fail");
    }
}

/// Header `Q mode m T_max`; per episode `T' success`, the steps, then the
/// warm-up steps prefixed with `w`.
pub fn dataset_to_string(data: &Dataset) -> String {
    let mut out = String::new();
    let m = data.mode.dim();
    writeln!(out, "{} {} {m} {}", data.episodes.len(), data.mode, data.t_max).expect("infallible");
    for e in &data.episodes {
        writeln!(out, "{} {}", e.trajectory.len(), u8::from(e.trajectory.success)).expect("infallible");
        write_steps(&mut out, &e.trajectory, "");
        write_steps(&mut out, &e.warmup, "w ");
    }
    out
}

pub fn parse_dataset(text: &str, path: &Path) -> Result<Dataset> {
    let mut c = Cursor::new(text, path);
    let head = c.tokens("the header `Q mode m T_max`")?;
    if head.len() != 4 {
        return Err(c.err("header must be `Q mode m T_max`"));
    }
    let q: usize = c.parse(head[0], "trajectory count")?;
    let mode: ObsMode = c.parse(head[1], "observation mode")?;
    let m: usize = c.parse(head[2], "observation dimension")?;
    let t_max: usize = c.parse(head[3], "T_max")?;
    if m != mode.dim() {
        return Err(c.err(format!("mode {mode} has dimension {}, header says {m}", mode.dim())));
    }
    let mut episodes = Vec::with_capacity(q);
    for _ in 0..q {
        let toks = c.tokens("a trajectory header `T' success`")?;
        if toks.len() != 2 {
            return Err(c.err("trajectory header must be `T' success`"));
        }
        let len: usize = c.parse(toks[0], "trajectory length")?;
        let success = match toks[1] {
            "1" => true,
            "0" => false,
            other => return Err(c.err(format!("success flag must be 0 or 1, found `{other}`"))),
        };
        if len == 0 || len > t_max {
            return Err(c.err(format!("trajectory length {len} outside 1..={t_max}")));
        }
        let mut trajectory = Trajectory::new(m);
        for _ in 0..len {
            c.step(m, None, &mut trajectory)?;
        }
        trajectory.success = success;
        let mut warmup = Trajectory::new(m);
        for _ in 0..WARMUP_STEPS {
            c.step(m, Some("w"), &mut warmup)?;
        }
        episodes.push(StoredEpisode { trajectory, warmup });
    }
    c.finish()?;
    Ok(Dataset { mode, t_max, episodes })
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    write_file(path, &dataset_to_string(data))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(&read_file(path)?, path)
}

/// Hidden states of a dataset, kept apart from anything a learner reads:
/// header `Q`, then per episode `T'` followed by `T'` lines `x v`.
pub fn states_to_string(states: &[Vec<CarState>]) -> String {
    let mut out = String::new();
    writeln!(out, "{}", states.len()).expect("infallible");
    for episode in states {
        writeln!(out, "{}", episode.len()).expect("infallible");
        for s in episode {
            reals(&mut out, &[s.x, s.v]);
        }
    }
    out
}

pub fn parse_states(text: &str, path: &Path) -> Result<Vec<Vec<CarState>>> {
    let mut c = Cursor::new(text, path);
    let toks = c.tokens("the episode count")?;
    let q: usize = match toks.as_slice() {
        [q] => c.parse(q, "episode count")?,
        _ => return Err(c.err("header must be the episode count")),
    };
    let mut out = Vec::with_capacity(q);
    for _ in 0..q {
        let toks = c.tokens("an episode length")?;
        let len: usize = match toks.as_slice() {
            [l] => c.parse(l, "episode length")?,
            _ => return Err(c.err("expected an episode length")),
        };
        let episode = (0..len)
            .map(|_| c.reals(2, "state `x v`").map(|v| CarState::new(v[0], v[1])))
            .collect::<Result<Vec<_>>>()?;
        out.push(episode);
    }
    c.finish()?;
    Ok(out)
}

/// Fitted training latents: header `Q n`, then per trajectory `T'` followed
/// by `T'` lines of `n` reals.
pub fn latents_to_string(latents: &[LatentTrajectory]) -> String {
    let mut out = String::new();
    let n = latents.first().map_or(0, |z| z.n);
    writeln!(out, "{} {n}", latents.len()).expect("infallible");
    for z in latents {
        writeln!(out, "{}", z.len()).expect("infallible");
        for t in 0..z.len() {
            reals(&mut out, z.get(t));
        }
    }
    out
}

pub fn parse_latents(text: &str, path: &Path) -> Result<Vec<LatentTrajectory>> {
    let mut c = Cursor::new(text, path);
    let toks = c.tokens("the header `Q n`")?;
    let (q, n): (usize, usize) = match toks.as_slice() {
        [q, n] => (c.parse(q, "trajectory count")?, c.parse(n, "latent size")?),
        _ => return Err(c.err("header must be `Q n`")),
    };
    let mut out = Vec::with_capacity(q);
    for _ in 0..q {
        let toks = c.tokens("a trajectory length")?;
        let len: usize = match toks.as_slice() {
            [l] => c.parse(l, "trajectory length")?,
            _ => return Err(c.err("expected a trajectory length")),
        };
        let mut z = Vec::with_capacity(len * n);
        for _ in 0..len {
            z.extend(c.reals(n, "a latent")?);
        }
        out.push(LatentTrajectory { n, z });
    }
    c.finish()?;
    Ok(out)
}

/// Line 1 `n m lambda`; `W` (m rows), `b`; then per action `A_a` (n rows), `c_a`.
pub fn model_to_string(model: &Model) -> String {
    let mut out = String::new();
    let d = &model.decoder;
    write!(out, "{} {} ", d.latent_dim(), d.obs_dim()).expect("infallible");
    real(&mut out, d.lambda);
    out.push('\n');
    for i in 0..d.w.rows() {
        reals(&mut out, d.w.row(i));
    }
    reals(&mut out, &d.b);
    for map in &model.dynamics.maps {
        for i in 0..map.a.rows() {
            reals(&mut out, map.a.row(i));
        }
        reals(&mut out, &map.c);
    }
    out
}

pub fn parse_model(text: &str, path: &Path) -> Result<Model> {
    let mut c = Cursor::new(text, path);
    let head = c.tokens("the header `n m lambda`")?;
    if head.len() != 3 {
        return Err(c.err("header must be `n m lambda`"));
    }
    let n: usize = c.parse(head[0], "latent dimension")?;
    let m: usize = c.parse(head[1], "observation dimension")?;
    let lambda = c.real(head[2])?;
    if n == 0 || m == 0 {
        return Err(c.err("dimensions must be positive"));
    }
    if lambda < 0.0 {
        return Err(c.err("lambda must be non-negative"));
    }
    let w = c.matrix(m, n, "decoder row")?;
    let b = c.reals(m, "decoder bias")?;
    let mut maps = Vec::with_capacity(Action::COUNT);
    for _ in 0..Action::COUNT {
        let a = c.matrix(n, n, "dynamics row")?;
        let bias = c.reals(n, "dynamics bias")?;
        maps.push(AffineTanh { a, c: bias });
    }
    c.finish()?;
    let maps: [AffineTanh; Action::COUNT] = maps.try_into().expect("exactly one map per action");
    Model::new(DecoderParams { w, b, lambda }, DynamicsParams { maps })
}

pub fn write_model(path: &Path, model: &Model) -> Result<()> {
    write_file(path, &model_to_string(model))
}

pub fn read_model(path: &Path) -> Result<Model> {
    parse_model(&read_file(path)?, path)
}

/// `n_actions n_features`, then one weight line per action.
pub fn policy_to_string(policy: &LinearPolicy) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", Action::COUNT, policy.n_features()).expect("infallible");
    for w in policy.weights() {
        reals(&mut out, w);
    }
    out
}

pub fn parse_policy(text: &str, path: &Path) -> Result<LinearPolicy> {
    let mut c = Cursor::new(text, path);
    let head = c.tokens("the header `n_actions n_features`")?;
    if head.len() != 2 {
        return Err(c.err("header must be `n_actions n_features`"));
    }
    let actions: usize = c.parse(head[0], "action count")?;
    let features: usize = c.parse(head[1], "feature count")?;
    if actions != Action::COUNT {
        return Err(c.err(format!("expected {} actions, found {actions}", Action::COUNT)));
    }
    let weights = (0..actions).map(|_| c.reals(features, "weight line")).collect::<Result<Vec<_>>>()?;
    c.finish()?;
    LinearPolicy::from_weights(weights)
}

pub fn write_policy(path: &Path, policy: &LinearPolicy) -> Result<()> {
    write_file(path, &policy_to_string(policy))
}

pub fn read_policy(path: &Path) -> Result<LinearPolicy> {
    parse_policy(&read_file(path)?, path)
}

/// Parsed `key = value` lines. `#` starts a comment. Every key must be
/// consumed with [`KeyValues::take`] before [`KeyValues::finish`], which
/// rejects whatever is left over.
#[derive(Clone, Debug)]
pub struct KeyValues {
    path: PathBuf,
    entries: Vec<(usize, String, String)>,
}

impl KeyValues {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut entries: Vec<(usize, String, String)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() || value.is_empty() {
                return Err(err("empty key or value".into()));
            }
            if entries.iter().any(|(_, k, _)| k == key) {
                return Err(err(format!("duplicate key `{key}`")));
            }
            entries.push((i + 1, key.to_string(), value.to_string()));
        }
        Ok(KeyValues {
            path: path.to_path_buf(),
            entries,
        })
    }

    /// Removes `key` and parses its value; `Ok(None)` when absent.
    pub fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        let Some(pos) = self.entries.iter().position(|(_, k, _)| k == key) else {
            return Ok(None);
        };
        let (line, _, value) = self.entries.remove(pos);
        value.parse().map(Some).map_err(|e: T::Err| Error::Parse {
            path: self.path.clone(),
            line,
            msg: format!("invalid value `{value}` for `{key}`: {e}"),
        })
    }

    /// Like [`KeyValues::take`], writing into `slot` when present.
    pub fn take_into<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        match self.entries.first() {
            None => Ok(()),
            Some((line, key, _)) => Err(Error::Parse {
                path: self.path,
                line: *line,
                msg: format!("unknown key `{key}`"),
            }),
        }
    }
}
