//! Explicit-state files for external probabilistic model checkers, and the
//! plain-text serialization of a state space with its transition table.
//!
//! Explicit layout (PRISM style), for a file stem `model`:
//!
//! * `model.sta`: the line `(s,a,i,r,o,d,q,ra)`, then `index:(S,A,I,R,O,D,Q,Ra)` per state.
//! * `model.tra`: `src dst prob` per transition (chains) or `src action dst prob`
//!   (decision processes, `action` indexes the action list). Rows appear in
//!   state order, targets ascending. With `prism_headers` a first line gives
//!   `states transitions` (chains) or `states choices transitions`.
//! * `model.lab`: `0="init" 1="hospital_full" ...`, then `index: l1 l2 ...` for
//!   each state carrying at least one label.
//!
//! Probabilities are printed like C's `%.17g`, which round-trips every `f64`.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::model::{Action, ModelKind, Parameters, StateVector};
use crate::policy::Dtmc;
use crate::space::{StateIndex, StateSpace, TransitionTable};

/// `%.17g`: shortest of fixed or scientific notation with 17 significant digits,
/// trailing zeros removed.
pub fn format_g17(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        strip_zeros(&format!("{x:.*}", (16 - exp) as usize)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A named state predicate, evaluated on a space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Label {
    pub name: String,
    pub states: Vec<bool>,
}

impl Label {
    pub fn from_predicate<F>(name: &str, space: &StateSpace, pred: F) -> Label
    where
        F: Fn(&StateVector) -> bool,
    {
        Label {
            name: name.to_string(),
            states: space.iter().map(|v| pred(&v)).collect(),
        }
    }
}

/// `init`, `hospital_full` (`O = C`), `deaths_ge_frac` (`D >= fraction * N`)
/// and `all_absorbed` (`A = I = O = Q = 0`).
pub fn default_labels(space: &StateSpace, initial: &[StateIndex], death_fraction: f64) -> Vec<Label> {
    let mut init = vec![false; space.len()];
    for &i in initial {
        init[i] = true;
    }
    let (n, c) = (space.population(), space.capacity());
    vec![
        Label {
            name: "init".into(),
            states: init,
        },
        Label::from_predicate("hospital_full", space, |v| v.o == c),
        Label::from_predicate("deaths_ge_frac", space, |v| {
            v.d as f64 >= death_fraction * n as f64
        }),
        Label::from_predicate("all_absorbed", space, StateVector::is_absorbing),
    ]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportOptions {
    /// Prefix `.tra` with the PRISM count line.
    #[serde(default)]
    pub prism_headers: bool,
}

/// Paths of the three explicit files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitFiles {
    pub sta: PathBuf,
    pub tra: PathBuf,
    pub lab: PathBuf,
}

impl ExplicitFiles {
    pub fn with_stem(stem: impl AsRef<Path>) -> ExplicitFiles {
        let stem = stem.as_ref();
        let with = |ext: &str| {
            let mut s = stem.as_os_str().to_owned();
            s.push(ext);
            PathBuf::from(s)
        };
        ExplicitFiles {
            sta: with(".sta"),
            tra: with(".tra"),
            lab: with(".lab"),
        }
    }
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = File::create(&tmp).and_then(|f| {
        let mut w = BufWriter::new(f);
        body(&mut w)?;
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    });
    result
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| {
            let _ = fs::remove_file(&tmp);
            ModelError::io(path, e)
        })
}

fn write_states(w: &mut impl Write, space: &StateSpace) -> io::Result<()> {
    writeln!(w, "(s,a,i,r,o,d,q,ra)")?;
    for (i, v) in space.iter().enumerate() {
        let [s, a, ii, r, o, d, q, ra] = v.to_array();
        writeln!(w, "{i}:({s},{a},{ii},{r},{o},{d},{q},{ra})")?;
    }
    Ok(())
}

fn write_labels(w: &mut impl Write, labels: &[Label], len: usize) -> io::Result<()> {
    let names: Vec<String> = labels
        .iter()
        .enumerate()
        .map(|(k, l)| format!("{k}=\"{}\"", l.name))
        .collect();
    writeln!(w, "{}", names.join(" "))?;
    for i in 0..len {
        let hits: Vec<String> = labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.states[i])
            .map(|(k, _)| k.to_string())
            .collect();
        if !hits.is_empty() {
            writeln!(w, "{i}: {}", hits.join(" "))?;
        }
    }
    Ok(())
}

fn check_labels(labels: &[Label], len: usize) -> Result<()> {
    for l in labels {
        if l.states.len() != len {
            return Err(ModelError::DimensionMismatch {
                expected: len,
                actual: l.states.len(),
            });
        }
        if l.name.is_empty() || !l.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ModelError::Config(format!("invalid label name `{}`", l.name)));
        }
    }
    Ok(())
}

/// Writes `stem.sta`, `stem.tra` and `stem.lab` for a chain.
pub fn export_dtmc(
    stem: impl AsRef<Path>,
    dtmc: &Dtmc,
    labels: &[Label],
    options: ExportOptions,
) -> Result<ExplicitFiles> {
    let files = ExplicitFiles::with_stem(stem);
    let n = dtmc.num_states();
    if n == 0 {
        return Err(ModelError::EmptyModel("chain without states".into()));
    }
    check_labels(labels, n)?;
    write_atomic(&files.sta, |w| write_states(w, dtmc.space()))?;
    write_atomic(&files.tra, |w| {
        if options.prism_headers {
            writeln!(w, "{} {}", n, dtmc.nnz())?;
        }
        for i in 0..n {
            let (dst, p) = dtmc.row(i);
            for (&j, &q) in dst.iter().zip(p) {
                writeln!(w, "{i} {j} {}", format_g17(q))?;
            }
        }
        Ok(())
    })?;
    write_atomic(&files.lab, |w| write_labels(w, labels, n))?;
    Ok(files)
}

/// Writes `stem.sta`, `stem.tra` and `stem.lab` for a decision process.
pub fn export_mdp(
    stem: impl AsRef<Path>,
    space: &StateSpace,
    table: &TransitionTable,
    labels: &[Label],
    options: ExportOptions,
) -> Result<ExplicitFiles> {
    let files = ExplicitFiles::with_stem(stem);
    let n = space.len();
    if n == 0 {
        return Err(ModelError::EmptyModel("decision process without states".into()));
    }
    if table.num_states() != n {
        return Err(ModelError::DimensionMismatch {
            expected: n,
            actual: table.num_states(),
        });
    }
    check_labels(labels, n)?;
    let actions = table.action_set().len();
    write_atomic(&files.sta, |w| write_states(w, space))?;
    write_atomic(&files.tra, |w| {
        if options.prism_headers {
            let choices = (0..n)
                .map(|i| (0..actions).filter(|&a| table.row(i, a).is_some()).count())
                .sum::<usize>();
            writeln!(w, "{n} {choices} {}", table.nnz())?;
        }
        for i in 0..n {
            for a in 0..actions {
                if let Some((dst, p)) = table.row(i, a) {
                    for (&j, &q) in dst.iter().zip(p) {
                        writeln!(w, "{i} {a} {j} {}", format_g17(q))?;
                    }
                }
            }
        }
        Ok(())
    })?;
    write_atomic(&files.lab, |w| write_labels(w, labels, n))?;
    Ok(files)
}

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> ModelError {
    ModelError::Parse {
        path: path.display().to_string(),
        line,
        reason: reason.into(),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let f = File::open(path).map_err(|e| ModelError::io(path, e))?;
    BufReader::new(f)
        .lines()
        .collect::<io::Result<_>>()
        .map_err(|e| ModelError::io(path, e))
}

fn parse_states(path: &Path) -> Result<Vec<StateVector>> {
    let lines = read_lines(path)?;
    let mut states = Vec::new();
    for (k, line) in lines.iter().enumerate() {
        let lineno = k + 1;
        if k == 0 {
            if line.trim() != "(s,a,i,r,o,d,q,ra)" {
                return Err(parse_err(path, lineno, "expected header `(s,a,i,r,o,d,q,ra)`"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (idx, tuple) = line
            .split_once(':')
            .ok_or_else(|| parse_err(path, lineno, "expected `index:(tuple)`"))?;
        let idx: usize = idx
            .trim()
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad state index `{idx}`")))?;
        if idx != states.len() {
            return Err(parse_err(path, lineno, format!("expected index {}, got {idx}", states.len())));
        }
        let inner = tuple
            .trim()
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(|| parse_err(path, lineno, "tuple must be parenthesised"))?;
        let values: Vec<u32> = inner
            .split(',')
            .map(|x| x.trim().parse::<u32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, lineno, "tuple entries must be non-negative integers"))?;
        let arr: [u32; 8] = values
            .try_into()
            .map_err(|_| parse_err(path, lineno, "tuple must have 8 entries"))?;
        states.push(StateVector::from_array(arr));
    }
    if states.is_empty() {
        return Err(ModelError::EmptyModel(format!("{} lists no states", path.display())));
    }
    Ok(states)
}

fn parse_transitions(path: &Path, len: usize) -> Result<Vec<Vec<(u32, f64)>>> {
    let lines = read_lines(path)?;
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); len];
    for (k, line) in lines.iter().enumerate() {
        let lineno = k + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if k == 0 && fields.len() == 2 {
            // Optional PRISM count line.
            continue;
        }
        if fields.len() != 3 {
            return Err(parse_err(path, lineno, "expected `src dst prob`"));
        }
        let index = |s: &str| -> Result<u32> {
            let i: u32 = s
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad state index `{s}`")))?;
            if i as usize >= len {
                return Err(parse_err(path, lineno, format!("state index {i} out of range")));
            }
            Ok(i)
        };
        let (src, dst) = (index(fields[0])?, index(fields[1])?);
        let p: f64 = fields[2]
            .parse()
            .map_err(|_| parse_err(path, lineno, format!("bad probability `{}`", fields[2])))?;
        if !(p > 0.0 && p <= 1.0) {
            return Err(parse_err(path, lineno, format!("probability {p} outside (0, 1]")));
        }
        rows[src as usize].push((dst, p));
    }
    Ok(rows)
}

fn parse_labels(path: &Path, len: usize) -> Result<Vec<Label>> {
    let lines = read_lines(path)?;
    let Some(header) = lines.first() else {
        return Ok(Vec::new());
    };
    let mut labels = Vec::new();
    for (k, decl) in header.split_whitespace().enumerate() {
        let (idx, name) = decl
            .split_once('=')
            .ok_or_else(|| parse_err(path, 1, format!("bad label declaration `{decl}`")))?;
        if idx.parse::<usize>().ok() != Some(k) {
            return Err(parse_err(path, 1, format!("labels must be numbered from 0, got `{idx}`")));
        }
        let name = name
            .strip_prefix('"')
            .and_then(|n| n.strip_suffix('"'))
            .ok_or_else(|| parse_err(path, 1, "label names must be quoted"))?;
        labels.push(Label {
            name: name.to_string(),
            states: vec![false; len],
        });
    }
    for (k, line) in lines.iter().enumerate().skip(1) {
        let lineno = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (state, ids) = line
            .split_once(':')
            .ok_or_else(|| parse_err(path, lineno, "expected `state: labels`"))?;
        let state: usize = state
            .trim()
            .parse()
            .ok()
            .filter(|&s| s < len)
            .ok_or_else(|| parse_err(path, lineno, format!("bad state index `{state}`")))?;
        for id in ids.split_whitespace() {
            let id: usize = id
                .parse()
                .ok()
                .filter(|&i| i < labels.len())
                .ok_or_else(|| parse_err(path, lineno, format!("unknown label `{id}`")))?;
            labels[id].states[state] = true;
        }
    }
    Ok(labels)
}

/// Reads a chain written by [`export_dtmc`].
///
/// The population is taken from the state tuples and the capacity is the
/// largest `O` seen; the model kind is `simplified` when no state uses `Q`
/// or `Ra`. Each row must sum to 1 within the normalization tolerance.
pub fn import_dtmc(stem: impl AsRef<Path>) -> Result<(Dtmc, Vec<Label>)> {
    let files = ExplicitFiles::with_stem(stem);
    let states = parse_states(&files.sta)?;
    let n = states[0].total();
    if let Some((k, v)) = states.iter().enumerate().find(|(_, v)| v.total() != n) {
        return Err(parse_err(
            &files.sta,
            k + 2,
            format!("state {v} does not hold the population {n}"),
        ));
    }
    let c = states.iter().map(|v| v.o).max().unwrap_or(0);
    let kind = if states.iter().all(|v| v.q == 0 && v.ra == 0) {
        ModelKind::Simplified
    } else {
        ModelKind::Full
    };
    let len = states.len();
    let space = StateSpace::from_states(kind, &Parameters::reference(n, c), states.iter().copied())?;
    if space.len() != len || !space.iter().eq(states.iter().copied()) {
        return Err(parse_err(&files.sta, 2, "states must be distinct and in canonical order"));
    }
    let rows = parse_transitions(&files.tra, len)?;
    let dtmc = Dtmc::from_rows(space, rows)?;
    let labels = parse_labels(&files.lab, len)?;
    Ok((dtmc, labels))
}

/// Outcome of re-exporting an imported chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub states: usize,
    pub transitions: usize,
    /// Byte equality of the `.sta`, `.tra` and `.lab` files.
    pub identical: [bool; 3],
}

impl RoundTrip {
    pub fn is_identical(&self) -> bool {
        self.identical.iter().all(|&b| b)
    }
}

/// Imports `stem`, writes it again under `scratch` and compares the bytes.
/// The PRISM count line is reproduced when the original has one.
pub fn roundtrip_check(stem: impl AsRef<Path>, scratch: impl AsRef<Path>) -> Result<RoundTrip> {
    let original = ExplicitFiles::with_stem(&stem);
    let (dtmc, labels) = import_dtmc(&stem)?;
    let first = read_lines(&original.tra)?.into_iter().next().unwrap_or_default();
    let options = ExportOptions {
        prism_headers: first.split_whitespace().count() == 2,
    };
    let name = stem
        .as_ref()
        .file_name()
        .ok_or_else(|| ModelError::Config("export stem has no file name".into()))?;
    let copy = export_dtmc(scratch.as_ref().join(name), &dtmc, &labels, options)?;
    let same = |a: &Path, b: &Path| -> Result<bool> {
        let x = fs::read(a).map_err(|e| ModelError::io(a, e))?;
        let y = fs::read(b).map_err(|e| ModelError::io(b, e))?;
        Ok(x == y)
    };
    Ok(RoundTrip {
        states: dtmc.num_states(),
        transitions: dtmc.nnz(),
        identical: [
            same(&original.sta, &copy.sta)?,
            same(&original.tra, &copy.tra)?,
            same(&original.lab, &copy.lab)?,
        ],
    })
}

/// Metadata written next to a serialized space and table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub format_version: u32,
    pub kind: ModelKind,
    pub parameters: Parameters,
    pub actions: Vec<Action>,
    pub states: usize,
    pub transitions: usize,
}

/// Writes `states.txt` (`S A I R O D Q Ra` per line, index order),
/// `transitions.txt` (`src action dst prob`) and `header.json` into `dir`.
pub fn write_space_table(
    dir: impl AsRef<Path>,
    space: &StateSpace,
    table: &TransitionTable,
    params: &Parameters,
) -> Result<()> {
    let dir = dir.as_ref();
    if table.num_states() != space.len() {
        return Err(ModelError::DimensionMismatch {
            expected: space.len(),
            actual: table.num_states(),
        });
    }
    write_atomic(&dir.join("states.txt"), |w| {
        for v in space.iter() {
            let a = v.to_array().map(|x| x.to_string());
            writeln!(w, "{}", a.join(" "))?;
        }
        Ok(())
    })?;
    let actions = table.action_set().len();
    write_atomic(&dir.join("transitions.txt"), |w| {
        for i in 0..space.len() {
            for a in 0..actions {
                if let Some((dst, p)) = table.row(i, a) {
                    for (&j, &q) in dst.iter().zip(p) {
                        writeln!(w, "{i} {a} {j} {}", format_g17(q))?;
                    }
                }
            }
        }
        Ok(())
    })?;
    let header = TableHeader {
        format_version: 1,
        kind: space.kind(),
        parameters: *params,
        actions: table.action_set().actions().to_vec(),
        states: space.len(),
        transitions: table.nnz(),
    };
    write_atomic(&dir.join("header.json"), |w| {
        serde_json::to_writer_pretty(&mut *w, &header).map_err(io::Error::other)?;
        writeln!(w)
    })
}
