//! Configuration files, diagnostics CSV and binary snapshots.
//!
//! Config files are flat `key = value` lines grouped under `[grid]`,
//! `[method]`, `[preset]` and `[output]`. `#` starts a comment.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::driver::{
    DiagnosticsRow, DiagnosticsSeries, Dimensionality, KineticState, Level, Simulation,
    SolverConfig,
};
use crate::error::{LomacError, Result};
use crate::ht::{HtSpace, HtTensor};
use crate::lowrank::LowRankMatrix;
use crate::macroscopic::MacroState;
use crate::presets::Preset;

const SECTIONS: [(&str, &[&str]); 4] = [
    ("grid", &["nx", "nv", "v_max"]),
    (
        "method",
        &[
            "variant",
            "eps",
            "relative_eps",
            "cfl",
            "dt",
            "t_end",
            "beta",
            "rank_cap",
            "poisson_sign",
        ],
    ),
    ("preset", &["name", "alpha", "k"]),
    ("output", &["every"]),
];

/// One `key = value` assignment with its origin line (0 for overrides).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigEntry {
    pub section: String,
    pub key: String,
    pub value: String,
    pub line: usize,
}

fn section_of(key: &str) -> Option<&'static str> {
    SECTIONS
        .iter()
        .find(|(_, keys)| keys.contains(&key))
        .map(|(s, _)| *s)
}

fn unknown_key(section: &str, key: &str, line: usize) -> LomacError {
    let known: Vec<String> = SECTIONS
        .iter()
        .flat_map(|(s, ks)| ks.iter().map(move |k| format!("{s}.{k}")))
        .collect();
    let msg = format!(
        "unknown key `{key}` in [{section}]; known keys: {}",
        known.join(", ")
    );
    if line > 0 {
        LomacError::Parse { line, msg }
    } else {
        LomacError::Config(msg)
    }
}

pub fn parse_config_str(text: &str) -> Result<Vec<ConfigEntry>> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        if let Some(name) = s.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| LomacError::Parse {
                    line,
                    msg: format!("malformed section header `{s}`"),
                })?
                .trim();
            if !SECTIONS.iter().any(|(n, _)| *n == name) {
                return Err(LomacError::Parse {
                    line,
                    msg: format!("unknown section [{name}]"),
                });
            }
            section = Some(name.to_string());
            continue;
        }
        let (k, v) = s.split_once('=').ok_or_else(|| LomacError::Parse {
            line,
            msg: format!("expected `key = value`, got `{s}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        let sec = section.clone().ok_or_else(|| LomacError::Parse {
            line,
            msg: format!("key `{k}` appears before any section header"),
        })?;
        if section_of(k) != Some(sec.as_str()) {
            return Err(unknown_key(&sec, k, line));
        }
        out.push(ConfigEntry {
            section: sec,
            key: k.to_string(),
            value: v.to_string(),
            line,
        });
    }
    Ok(out)
}

/// Parses a command-line override `key=value` or `section.key=value`.
pub fn parse_override(s: &str) -> Result<ConfigEntry> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| LomacError::Config(format!("override `{s}` is not key=value")))?;
    let (k, v) = (k.trim(), v.trim());
    let (section, key) = match k.split_once('.') {
        Some((sec, key)) => {
            if section_of(key) != Some(sec) {
                return Err(unknown_key(sec, key, 0));
            }
            (sec.to_string(), key.to_string())
        }
        None => match section_of(k) {
            Some(sec) => (sec.to_string(), k.to_string()),
            None => return Err(unknown_key("any", k, 0)),
        },
    };
    Ok(ConfigEntry {
        section,
        key,
        value: v.to_string(),
        line: 0,
    })
}

fn value_error(e: &ConfigEntry, expected: &str) -> LomacError {
    let msg = format!(
        "invalid value `{}` for {}.{}: expected {expected}",
        e.value, e.section, e.key
    );
    if e.line > 0 {
        LomacError::Parse { line: e.line, msg }
    } else {
        LomacError::Config(msg)
    }
}

/// Builds a config from entries: the last `preset.name` selects the
/// defaults, every other entry is then applied in order.
pub fn config_from_entries(entries: &[ConfigEntry]) -> Result<SolverConfig> {
    let name = entries
        .iter()
        .rev()
        .find(|e| e.key == "name")
        .ok_or_else(|| {
            LomacError::Config(format!(
                "missing required key preset.name (one of: {})",
                Preset::ALL.map(|p| p.name()).join(", ")
            ))
        })?;
    let preset: Preset = name.value.parse()?;
    let mut cfg = SolverConfig::from_preset(preset);
    for e in entries.iter().filter(|e| e.key != "name") {
        let f = || -> Result<f64> {
            e.value
                .parse::<f64>()
                .map_err(|_| value_error(e, "a real number"))
        };
        let u = || -> Result<usize> {
            e.value
                .parse::<usize>()
                .map_err(|_| value_error(e, "a nonnegative integer"))
        };
        match e.key.as_str() {
            "nx" => cfg.nx = u()?,
            "nv" => cfg.nv = u()?,
            "v_max" => cfg.v_max = f()?,
            "variant" => {
                cfg.variant = e
                    .value
                    .parse()
                    .map_err(|_| value_error(e, "I, II or III"))?
            }
            "eps" => cfg.eps = f()?,
            "relative_eps" => {
                cfg.relative_eps = e
                    .value
                    .parse()
                    .map_err(|_| value_error(e, "true or false"))?
            }
            "cfl" => cfg.cfl = f()?,
            "dt" => cfg.dt = Some(f()?),
            "t_end" => cfg.t_end = f()?,
            "beta" => cfg.beta = f()?,
            "rank_cap" => cfg.rank_cap = u()?,
            "poisson_sign" => cfg.poisson_sign = f()?,
            "alpha" => cfg.alpha = f()?,
            "k" => cfg.k = f()?,
            "every" => cfg.output_every = u()?,
            _ => return Err(unknown_key(&e.section, &e.key, e.line)),
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<SolverConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| LomacError::io(path, e))?;
    config_from_entries(&parse_config_str(&text)?)
}

/// Renders a config in the file format accepted by [`load_config`].
pub fn config_to_string(cfg: &SolverConfig) -> String {
    let mut s = String::new();
    s += &format!(
        "[grid]\nnx = {}\nnv = {}\nv_max = {:e}\n\n",
        cfg.nx, cfg.nv, cfg.v_max
    );
    s += &format!(
        "[method]\nvariant = {}\neps = {:e}\nrelative_eps = {}\ncfl = {:e}\n",
        cfg.variant, cfg.eps, cfg.relative_eps, cfg.cfl
    );
    if let Some(dt) = cfg.dt {
        s += &format!("dt = {dt:e}\n");
    }
    s += &format!(
        "t_end = {:e}\nbeta = {:e}\nrank_cap = {}\npoisson_sign = {}\n\n",
        cfg.t_end, cfg.beta, cfg.rank_cap, cfg.poisson_sign
    );
    s += &format!(
        "[preset]\nname = {}\nalpha = {:e}\nk = {:e}\n\n[output]\nevery = {}\n",
        cfg.preset, cfg.alpha, cfg.k, cfg.output_every
    );
    s
}

// ---------------------------------------------------------------- CSV

pub fn csv_header(dim: Dimensionality) -> String {
    match dim {
        Dimensionality::OneD1V => "t,rank,mass,mom1,energy,efield_energy,wall_ms".into(),
        Dimensionality::TwoD2V => {
            "t,r12,r34,r3,r4,mass,mom1,mom2,energy,efield_energy,wall_ms".into()
        }
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn append_row(row: &DiagnosticsRow, sink: &mut impl Write) -> std::io::Result<()> {
    let mut fields = vec![fmt_f(row.t)];
    fields.extend(row.ranks.iter().map(|r| r.to_string()));
    fields.push(fmt_f(row.mass));
    fields.extend(row.momentum.iter().map(|m| fmt_f(*m)));
    fields.push(fmt_f(row.energy));
    fields.push(fmt_f(row.electric_energy));
    fields.push(fmt_f(row.wall_ms));
    writeln!(sink, "{}", fields.join(","))
}

pub fn write_diagnostics(series: &DiagnosticsSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LomacError::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res = (|| {
        writeln!(w, "{}", csv_header(series.dimensionality))?;
        for row in &series.rows {
            append_row(row, &mut w)?;
        }
        w.flush()
    })();
    res.map_err(|e| LomacError::io(path, e))
}

pub fn read_diagnostics(path: impl AsRef<Path>) -> Result<DiagnosticsSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LomacError::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| LomacError::Parse {
            line: 1,
            msg: "empty diagnostics file".into(),
        })?
        .map_err(|e| LomacError::io(path, e))?;
    let dim = if header == csv_header(Dimensionality::OneD1V) {
        Dimensionality::OneD1V
    } else if header == csv_header(Dimensionality::TwoD2V) {
        Dimensionality::TwoD2V
    } else {
        return Err(LomacError::Parse {
            line: 1,
            msg: format!("unrecognized header `{header}`"),
        });
    };
    let (nr, nm) = match dim {
        Dimensionality::OneD1V => (1, 1),
        Dimensionality::TwoD2V => (4, 2),
    };
    let mut series = DiagnosticsSeries::new(dim);
    for (i, l) in lines.enumerate() {
        let line = i + 2;
        let l = l.map_err(|e| LomacError::io(path, e))?;
        let cols: Vec<&str> = l.split(',').collect();
        if cols.len() != 5 + nr + nm {
            return Err(LomacError::Parse {
                line,
                msg: format!("expected {} columns, got {}", 5 + nr + nm, cols.len()),
            });
        }
        let pf = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| LomacError::Parse {
                line,
                msg: format!("bad number `{s}`"),
            })
        };
        let pu = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| LomacError::Parse {
                line,
                msg: format!("bad rank `{s}`"),
            })
        };
        let ranks = cols[1..1 + nr]
            .iter()
            .map(|s| pu(s))
            .collect::<Result<_>>()?;
        let o = 1 + nr;
        series.rows.push(DiagnosticsRow {
            t: pf(cols[0])?,
            ranks,
            mass: pf(cols[o])?,
            momentum: cols[o + 1..o + 1 + nm]
                .iter()
                .map(|s| pf(s))
                .collect::<Result<_>>()?,
            energy: pf(cols[o + 1 + nm])?,
            electric_energy: pf(cols[o + 2 + nm])?,
            wall_ms: pf(cols[o + 3 + nm])?,
        });
    }
    Ok(series)
}

// ---------------------------------------------------------------- snapshots

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"LOMACSNP";
pub const SNAPSHOT_VERSION: u64 = 1;

/// Full restart state: run descriptors plus every stored time level.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub version: u64,
    pub dimensionality: Dimensionality,
    pub nx: usize,
    pub nv: usize,
    pub v_max: f64,
    pub beta: f64,
    pub eps: f64,
    pub time: f64,
    pub step: usize,
    pub dt: f64,
    pub levels: Vec<Level>,
}

impl Snapshot {
    pub fn from_simulation(sim: &Simulation) -> Self {
        let cfg = sim.config();
        Self {
            version: SNAPSHOT_VERSION,
            dimensionality: cfg.dimensionality(),
            nx: cfg.nx,
            nv: cfg.nv,
            v_max: cfg.v_max,
            beta: cfg.beta,
            eps: cfg.eps,
            time: sim.time(),
            step: sim.step_index(),
            dt: sim.dt(),
            levels: sim.history().cloned().collect(),
        }
    }

    /// Rebuilds a simulation; the grid descriptors must match `cfg`.
    pub fn resume(&self, cfg: SolverConfig) -> Result<Simulation> {
        if cfg.dimensionality() != self.dimensionality
            || cfg.nx != self.nx
            || cfg.nv != self.nv
            || cfg.v_max != self.v_max
            || cfg.beta != self.beta
        {
            return Err(LomacError::Snapshot(
                "snapshot grid does not match the configuration".into(),
            ));
        }
        Simulation::from_parts(cfg, self.dt, self.step, self.levels.clone())
    }
}

struct Writer<W: Write> {
    w: W,
}

impl<W: Write> Writer<W> {
    fn u(&mut self, x: usize) -> std::io::Result<()> {
        self.w.write_all(&(x as u64).to_le_bytes())
    }
    fn f(&mut self, x: f64) -> std::io::Result<()> {
        self.w.write_all(&x.to_le_bytes())
    }
    fn mat(&mut self, m: &DMatrix<f64>) -> std::io::Result<()> {
        self.u(m.nrows())?;
        self.u(m.ncols())?;
        for x in m.iter() {
            self.f(*x)?;
        }
        Ok(())
    }
    fn vec(&mut self, v: &[f64]) -> std::io::Result<()> {
        self.u(v.len())?;
        for x in v {
            self.f(*x)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    r: R,
}

impl<R: Read> Reader<R> {
    fn bytes(&mut self) -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        self.r
            .read_exact(&mut b)
            .map_err(|_| LomacError::Snapshot("truncated snapshot".into()))?;
        Ok(b)
    }
    fn u(&mut self) -> Result<usize> {
        let x = u64::from_le_bytes(self.bytes()?);
        usize::try_from(x).map_err(|_| LomacError::Snapshot("integer out of range".into()))
    }
    fn size(&mut self) -> Result<usize> {
        let x = self.u()?;
        // Guards allocation on corrupt input.
        if x > 1 << 32 {
            return Err(LomacError::Snapshot(format!("implausible block size {x}")));
        }
        Ok(x)
    }
    fn f(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u()? {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(LomacError::Snapshot(format!("bad flag {x}"))),
        }
    }
    fn mat(&mut self) -> Result<DMatrix<f64>> {
        let (r, c) = (self.size()?, self.size()?);
        let data = (0..r * c).map(|_| self.f()).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_vec(r, c, data))
    }
    fn vec(&mut self) -> Result<Vec<f64>> {
        let n = self.size()?;
        (0..n).map(|_| self.f()).collect()
    }
}

fn write_lowrank<W: Write>(w: &mut Writer<W>, f: &LowRankMatrix) -> std::io::Result<()> {
    w.f(f.hx())?;
    w.f(f.hv())?;
    w.u(f.is_canonical() as usize)?;
    w.vec(f.coeffs().as_slice())?;
    w.mat(f.x_factors())?;
    w.mat(f.v_factors())
}

fn read_lowrank<R: Read>(r: &mut Reader<R>) -> Result<LowRankMatrix> {
    let (hx, hv) = (r.f()?, r.f()?);
    let canonical = r.flag()?;
    let c = DVector::from_vec(r.vec()?);
    let x = r.mat()?;
    let v = r.mat()?;
    Ok(LowRankMatrix::new(c, x, v, hx, hv)?.with_canonical(canonical))
}

fn write_ht<W: Write>(w: &mut Writer<W>, f: &HtTensor) -> std::io::Result<()> {
    let s = f.space();
    w.u(s.n1)?;
    w.u(s.n2)?;
    w.u(s.nv)?;
    w.f(s.hx1)?;
    w.f(s.hx2)?;
    w.f(s.hv)?;
    w.u(f.is_canonical() as usize)?;
    w.mat(f.u12())?;
    w.mat(f.b_root())?;
    w.u(f.b34().len())?;
    for b in f.b34() {
        w.mat(b)?;
    }
    w.mat(f.u3())?;
    w.mat(f.u4())
}

fn read_ht<R: Read>(r: &mut Reader<R>) -> Result<HtTensor> {
    let space = HtSpace {
        n1: r.size()?,
        n2: r.size()?,
        nv: r.size()?,
        hx1: r.f()?,
        hx2: r.f()?,
        hv: r.f()?,
    };
    let canonical = r.flag()?;
    let u12 = r.mat()?;
    let b_root = r.mat()?;
    let n = r.size()?;
    let b34 = (0..n).map(|_| r.mat()).collect::<Result<Vec<_>>>()?;
    let u3 = r.mat()?;
    let u4 = r.mat()?;
    Ok(HtTensor::new(space, u12, b_root, b34, u3, u4)?.with_canonical(canonical))
}

fn write_macro<W: Write>(w: &mut Writer<W>, m: &MacroState) -> std::io::Result<()> {
    w.u(m.shape().len())?;
    for s in m.shape() {
        w.u(*s)?;
    }
    let vars = m.variables();
    w.u(vars.len())?;
    for v in vars {
        w.vec(v)?;
    }
    Ok(())
}

fn read_macro<R: Read>(r: &mut Reader<R>) -> Result<MacroState> {
    let nd = r.size()?;
    let shape = (0..nd).map(|_| r.size()).collect::<Result<Vec<_>>>()?;
    let nvar = r.size()?;
    let mut vars = (0..nvar).map(|_| r.vec()).collect::<Result<Vec<_>>>()?;
    match (shape.as_slice(), nvar) {
        ([_], 3) => {
            let e = vars.pop().unwrap();
            let j = vars.pop().unwrap();
            MacroState::new_1d(vars.pop().unwrap(), j, e)
        }
        ([n1, n2], 4) => {
            let e = vars.pop().unwrap();
            let j2 = vars.pop().unwrap();
            let j1 = vars.pop().unwrap();
            MacroState::new_2d(*n1, *n2, vars.pop().unwrap(), j1, j2, e)
        }
        _ => Err(LomacError::Snapshot("bad macroscopic block".into())),
    }
}

pub fn write_snapshot(snap: &Snapshot, sink: &mut impl Write) -> std::io::Result<()> {
    let mut w = Writer { w: sink };
    w.w.write_all(SNAPSHOT_MAGIC)?;
    w.u(snap.version as usize)?;
    w.u(match snap.dimensionality {
        Dimensionality::OneD1V => 1,
        Dimensionality::TwoD2V => 2,
    })?;
    w.u(snap.nx)?;
    w.u(snap.nv)?;
    w.f(snap.v_max)?;
    w.f(snap.beta)?;
    w.f(snap.eps)?;
    w.f(snap.time)?;
    w.u(snap.step)?;
    w.f(snap.dt)?;
    w.u(snap.levels.len())?;
    for level in &snap.levels {
        match &level.f {
            KineticState::One(f) => write_lowrank(&mut w, f)?,
            KineticState::Two(f) => write_ht(&mut w, f)?,
        }
        match &level.macro_state {
            Some(m) => {
                w.u(1)?;
                write_macro(&mut w, m)?;
            }
            None => w.u(0)?,
        }
    }
    Ok(())
}

pub fn read_snapshot(source: &mut impl Read) -> Result<Snapshot> {
    let mut r = Reader { r: source };
    if &r.bytes()? != SNAPSHOT_MAGIC {
        return Err(LomacError::Snapshot("not a snapshot file".into()));
    }
    let version = r.u()? as u64;
    if version != SNAPSHOT_VERSION {
        return Err(LomacError::Snapshot(format!(
            "unsupported snapshot version {version} (expected {SNAPSHOT_VERSION})"
        )));
    }
    let dimensionality = match r.u()? {
        1 => Dimensionality::OneD1V,
        2 => Dimensionality::TwoD2V,
        d => return Err(LomacError::Snapshot(format!("bad dimensionality {d}"))),
    };
    let nx = r.size()?;
    let nv = r.size()?;
    let v_max = r.f()?;
    let beta = r.f()?;
    let eps = r.f()?;
    let time = r.f()?;
    let step = r.u()?;
    let dt = r.f()?;
    let n = r.size()?;
    let mut levels = Vec::with_capacity(n.min(3));
    for _ in 0..n {
        let f = match dimensionality {
            Dimensionality::OneD1V => KineticState::One(read_lowrank(&mut r)?),
            Dimensionality::TwoD2V => KineticState::Two(read_ht(&mut r)?),
        };
        let macro_state = if r.flag()? {
            Some(read_macro(&mut r)?)
        } else {
            None
        };
        levels.push(Level { f, macro_state });
    }
    Ok(Snapshot {
        version,
        dimensionality,
        nx,
        nv,
        v_max,
        beta,
        eps,
        time,
        step,
        dt,
        levels,
    })
}

pub fn snapshot_write(snap: &Snapshot, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| LomacError::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_snapshot(snap, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| LomacError::io(path, e))
}

pub fn snapshot_read(path: impl AsRef<Path>) -> Result<Snapshot> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| LomacError::io(path, e))?;
    read_snapshot(&mut BufReader::new(file))
}
