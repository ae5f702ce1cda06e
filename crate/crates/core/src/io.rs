//! Instance files: native JSON and MPS with a follower AUX file.
//!
//! Native JSON:
//!
//! ```json
//! {
//!   "format": 1,
//!   "name": "two_row",
//!   "leader": { "c": [0, 0, 0], "rows": { "x": [], "y": [], "rhs": [] } },
//!   "follower": { "p": [0, 0], "d": [-5, 3] },
//!   "interaction": { "a": [[-1, -1, -1], [0, 0, -2]], "b": [[-3, -1], [-4, 2]], "rhs": [-5, -4] }
//! }
//! ```
//!
//! Integers are written as JSON integers, other floats as the shortest
//! decimal that reads back to the same value, and non-integer rationals
//! as `"p/q"` strings. `"leader.rows"` and `"row_scale"` are optional.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde_json::{json, Map, Number, Value};
use valnet_milp::Scalar;

use crate::instance::BilevelInstance;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum IoError {
    #[error("invalid JSON: {0}")]
    Syntax(String),
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("MPS line {line}: {message}")]
    Mps { line: usize, message: String },
    #[error("AUX line {line}: {message}")]
    Aux { line: usize, message: String },
}

fn schema(path: &str, message: impl Into<String>) -> IoError {
    IoError::Schema { path: path.to_string(), message: message.into() }
}

fn number<T: Scalar>(v: &T) -> Value {
    if let Some(i) = v.to_exact_i64() {
        return json!(i);
    }
    if !T::EXACT {
        if let Some(n) = Number::from_f64(v.to_f64_lossy()) {
            return Value::Number(n);
        }
    }
    match v.to_rational() {
        Some(r) => Value::String(r.to_string()),
        None => Value::Null,
    }
}

fn vector<T: Scalar>(v: &[T]) -> Value {
    Value::Array(v.iter().map(number).collect())
}

fn matrix<T: Scalar>(m: &[Vec<T>]) -> Value {
    Value::Array(m.iter().map(|r| vector(r)).collect())
}

pub fn write_native<T: Scalar>(inst: &BilevelInstance<T>) -> String {
    let mut root = Map::new();
    root.insert("format".into(), json!(FORMAT_VERSION));
    root.insert("name".into(), json!(inst.name));
    let mut leader = Map::new();
    leader.insert("c".into(), vector(&inst.c));
    if inst.m_l() > 0 {
        leader.insert("rows".into(), json!({ "x": matrix(&inst.gx), "y": matrix(&inst.gy), "rhs": vector(&inst.h) }));
    }
    root.insert("leader".into(), Value::Object(leader));
    root.insert("follower".into(), json!({ "p": vector(&inst.p), "d": vector(&inst.d) }));
    root.insert(
        "interaction".into(),
        json!({ "a": matrix(&inst.a), "b": matrix(&inst.b), "rhs": vector(&inst.rhs) }),
    );
    if inst.row_scale.iter().any(|s| !s.is_one()) {
        root.insert("row_scale".into(), vector(&inst.row_scale));
    }
    let mut out = serde_json::to_string_pretty(&Value::Object(root)).expect("JSON values serialize");
    out.push('\n');
    out
}

struct Reader;

impl Reader {
    fn field<'v>(obj: &'v Value, path: &str, key: &str) -> Result<&'v Value, IoError> {
        let map = obj.as_object().ok_or_else(|| schema(path, "expected an object"))?;
        map.get(key).ok_or_else(|| schema(path, format!("missing field \"{key}\"")))
    }

    fn scalar<T: Scalar>(v: &Value, path: &str) -> Result<T, IoError> {
        let parsed = match v {
            Value::Number(n) => match n.as_i64() {
                Some(i) => Some(T::from_int(i)),
                None => T::parse_text(&n.to_string()),
            },
            Value::String(s) => T::parse_text(s),
            _ => return Err(schema(path, "expected a number")),
        };
        parsed.ok_or_else(|| schema(path, format!("cannot read {v} as a number")))
    }

    fn vector<T: Scalar>(v: &Value, path: &str, len: Option<usize>) -> Result<Vec<T>, IoError> {
        let arr = v.as_array().ok_or_else(|| schema(path, "expected an array"))?;
        if let Some(n) = len {
            if arr.len() != n {
                return Err(schema(path, format!("expected {n} entries, found {}", arr.len())));
            }
        }
        arr.iter().enumerate().map(|(i, x)| Self::scalar(x, &format!("{path}[{i}]"))).collect()
    }

    fn matrix<T: Scalar>(v: &Value, path: &str, rows: Option<usize>, cols: usize) -> Result<Vec<Vec<T>>, IoError> {
        let arr = v.as_array().ok_or_else(|| schema(path, "expected an array of rows"))?;
        if let Some(n) = rows {
            if arr.len() != n {
                return Err(schema(path, format!("expected {n} rows, found {}", arr.len())));
            }
        }
        arr.iter().enumerate().map(|(i, r)| Self::vector(r, &format!("{path}[{i}]"), Some(cols))).collect()
    }
}

pub fn read_native<T: Scalar>(text: &str) -> Result<BilevelInstance<T>, IoError> {
    let root: Value = serde_json::from_str(text).map_err(|e| IoError::Syntax(e.to_string()))?;
    let version = Reader::field(&root, "$", "format")?;
    if version.as_u64() != Some(FORMAT_VERSION) {
        return Err(schema("$.format", format!("unsupported format {version}, expected {FORMAT_VERSION}")));
    }
    let name = match root.get("name") {
        None => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(schema("$.name", "expected a string")),
    };
    let leader = Reader::field(&root, "$", "leader")?;
    let follower = Reader::field(&root, "$", "follower")?;
    let inter = Reader::field(&root, "$", "interaction")?;
    let c: Vec<T> = Reader::vector(Reader::field(leader, "$.leader", "c")?, "$.leader.c", None)?;
    let d: Vec<T> = Reader::vector(Reader::field(follower, "$.follower", "d")?, "$.follower.d", None)?;
    let p: Vec<T> = Reader::vector(Reader::field(follower, "$.follower", "p")?, "$.follower.p", Some(d.len()))?;
    let rhs: Vec<T> = Reader::vector(Reader::field(inter, "$.interaction", "rhs")?, "$.interaction.rhs", None)?;
    let (n_l, n_f, m) = (c.len(), d.len(), rhs.len());
    let a = Reader::matrix(Reader::field(inter, "$.interaction", "a")?, "$.interaction.a", Some(m), n_l)?;
    let b = Reader::matrix(Reader::field(inter, "$.interaction", "b")?, "$.interaction.b", Some(m), n_f)?;
    let mut inst = BilevelInstance::new(name, c, p, d, a, b, rhs);
    if let Some(rows) = leader.get("rows") {
        let h: Vec<T> = Reader::vector(Reader::field(rows, "$.leader.rows", "rhs")?, "$.leader.rows.rhs", None)?;
        let gx = Reader::matrix(Reader::field(rows, "$.leader.rows", "x")?, "$.leader.rows.x", Some(h.len()), n_l)?;
        let gy = Reader::matrix(Reader::field(rows, "$.leader.rows", "y")?, "$.leader.rows.y", Some(h.len()), n_f)?;
        inst = inst.with_leader_rows(gx, gy, h);
    }
    if let Some(scale) = root.get("row_scale") {
        inst.row_scale = Reader::vector(scale, "$.row_scale", Some(m))?;
    }
    if n_l == 0 || n_f == 0 || m == 0 {
        return Err(schema("$", "n_l, n_f and m must all be positive"));
    }
    Ok(inst)
}

fn mps_number<T: Scalar>(v: &T) -> String {
    if let Some(i) = v.to_exact_i64() {
        return i.to_string();
    }
    if !T::EXACT {
        return format!("{}", v.to_f64_lossy());
    }
    v.decimal_text().unwrap_or_else(|| v.to_rational().map(|r| r.to_string()).unwrap_or_default())
}

/// MPS text for the single-level data plus the AUX text naming the
/// follower. Interaction rows come first, then leader rows.
pub fn write_mps_aux<T: Scalar>(inst: &BilevelInstance<T>) -> (String, String) {
    let name = if inst.name.is_empty() { "instance".to_string() } else { inst.name.replace(char::is_whitespace, "_") };
    let mut mps = format!("NAME {name}\nROWS\n N obj\n");
    for i in 0..inst.m {
        let _ = writeln!(mps, " G link{i}");
    }
    for i in 0..inst.m_l() {
        let _ = writeln!(mps, " G lead{i}");
    }
    mps.push_str("COLUMNS\n    M1 'MARKER' 'INTORG'\n");
    let column = |out: &mut String, col: &str, obj: &T, link: Vec<&T>, lead: Vec<&T>| {
        let empty = link.iter().chain(&lead).all(|v| v.is_zero());
        if !obj.is_zero() || empty {
            let _ = writeln!(out, "    {col} obj {}", mps_number(obj));
        }
        for (i, v) in link.into_iter().enumerate().filter(|(_, v)| !v.is_zero()) {
            let _ = writeln!(out, "    {col} link{i} {}", mps_number(v));
        }
        for (i, v) in lead.into_iter().enumerate().filter(|(_, v)| !v.is_zero()) {
            let _ = writeln!(out, "    {col} lead{i} {}", mps_number(v));
        }
    };
    for j in 0..inst.n_l {
        column(&mut mps, &format!("x{j}"), &inst.c[j], inst.a.iter().map(|r| &r[j]).collect(), inst.gx.iter().map(|r| &r[j]).collect());
    }
    for k in 0..inst.n_f {
        column(&mut mps, &format!("y{k}"), &inst.p[k], inst.b.iter().map(|r| &r[k]).collect(), inst.gy.iter().map(|r| &r[k]).collect());
    }
    mps.push_str("    M2 'MARKER' 'INTEND'\nRHS\n");
    for (i, v) in inst.rhs.iter().enumerate().filter(|(_, v)| !v.is_zero()) {
        let _ = writeln!(mps, "    RHS link{i} {}", mps_number(v));
    }
    for (i, v) in inst.h.iter().enumerate().filter(|(_, v)| !v.is_zero()) {
        let _ = writeln!(mps, "    RHS lead{i} {}", mps_number(v));
    }
    mps.push_str("BOUNDS\n");
    for j in 0..inst.n_l {
        let _ = writeln!(mps, " BV BND x{j}");
    }
    for k in 0..inst.n_f {
        let _ = writeln!(mps, " BV BND y{k}");
    }
    mps.push_str("ENDATA\n");

    let mut aux = format!("N {}\nM {}\n", inst.n_f, inst.m);
    for k in 0..inst.n_f {
        let _ = writeln!(aux, "LC {}", inst.n_l + k);
    }
    for i in 0..inst.m {
        let _ = writeln!(aux, "LR {i}");
    }
    for v in &inst.d {
        let _ = writeln!(aux, "LO {}", mps_number(v));
    }
    aux.push_str("OS 1\n");
    (mps, aux)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Ge,
    Le,
    Eq,
}

struct MpsRow<T> {
    kind: RowKind,
    coefs: HashMap<usize, T>,
    rhs: T,
}

struct MpsColumn {
    name: String,
    integer: bool,
    lower: Option<Rational0>,
    upper: Option<Rational0>,
    binary: bool,
}

/// Bound values only need to be compared with 0 and 1.
#[derive(Clone, Copy, PartialEq)]
enum Rational0 {
    Zero,
    One,
    Other,
}

struct MpsData<T> {
    name: String,
    maximize: bool,
    objective: HashMap<usize, T>,
    rows: Vec<MpsRow<T>>,
    columns: Vec<MpsColumn>,
}

fn parse_mps<T: Scalar>(text: &str) -> Result<MpsData<T>, IoError> {
    let err = |line: usize, message: String| IoError::Mps { line, message };
    let mut data = MpsData { name: String::new(), maximize: false, objective: HashMap::new(), rows: Vec::new(), columns: Vec::new() };
    let mut row_index: HashMap<String, Option<usize>> = HashMap::new();
    let mut objective_name: Option<String> = None;
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut section = String::new();
    let mut integer = false;
    let mut ended = false;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(char::is_whitespace) {
            section = tokens[0].to_ascii_uppercase();
            match section.as_str() {
                "NAME" => data.name = tokens.get(1..).map(|t| t.join(" ")).unwrap_or_default(),
                "OBJSENSE" => {
                    if let Some(s) = tokens.get(1) {
                        data.maximize = s.eq_ignore_ascii_case("MAX") || s.eq_ignore_ascii_case("MAXIMIZE");
                    }
                }
                "ROWS" | "COLUMNS" | "RHS" | "BOUNDS" => {}
                "ENDATA" => {
                    ended = true;
                    break;
                }
                other => return Err(err(line, format!("unknown section {other}"))),
            }
            continue;
        }
        let num = |s: &str| T::parse_text(s).ok_or_else(|| err(line, format!("bad number {s:?}")));
        match section.as_str() {
            "OBJSENSE" => data.maximize = tokens[0].eq_ignore_ascii_case("MAX") || tokens[0].eq_ignore_ascii_case("MAXIMIZE"),
            "ROWS" => {
                if tokens.len() != 2 {
                    return Err(err(line, "expected row type and name".into()));
                }
                let kind = match tokens[0].to_ascii_uppercase().as_str() {
                    "N" => None,
                    "G" => Some(RowKind::Ge),
                    "L" => Some(RowKind::Le),
                    "E" => Some(RowKind::Eq),
                    t => return Err(err(line, format!("unknown row type {t}"))),
                };
                let name = tokens[1].to_string();
                if row_index.contains_key(&name) {
                    return Err(err(line, format!("duplicate row {name}")));
                }
                match kind {
                    Some(kind) => {
                        row_index.insert(name, Some(data.rows.len()));
                        data.rows.push(MpsRow { kind, coefs: HashMap::new(), rhs: T::zero() });
                    }
                    None => {
                        // Later free rows are ignored.
                        if objective_name.is_none() {
                            objective_name = Some(name.clone());
                        }
                        row_index.insert(name, None);
                    }
                }
            }
            "COLUMNS" => {
                if tokens.len() >= 3 && tokens[1].trim_matches('\'').eq_ignore_ascii_case("MARKER") {
                    match tokens[2].trim_matches('\'').to_ascii_uppercase().as_str() {
                        "INTORG" => integer = true,
                        "INTEND" => integer = false,
                        t => return Err(err(line, format!("unknown marker {t}"))),
                    }
                    continue;
                }
                if tokens.len() != 3 && tokens.len() != 5 {
                    return Err(err(line, "expected column, row, value [, row, value]".into()));
                }
                let col = match col_index.get(tokens[0]) {
                    Some(c) => *c,
                    None => {
                        col_index.insert(tokens[0].to_string(), data.columns.len());
                        data.columns.push(MpsColumn {
                            name: tokens[0].to_string(),
                            integer,
                            lower: None,
                            upper: None,
                            binary: false,
                        });
                        data.columns.len() - 1
                    }
                };
                for pair in tokens[1..].chunks(2) {
                    let v = num(pair[1])?;
                    if objective_name.as_deref() == Some(pair[0]) {
                        data.objective.insert(col, v);
                        continue;
                    }
                    match row_index.get(pair[0]) {
                        Some(Some(r)) => {
                            data.rows[*r].coefs.insert(col, v);
                        }
                        Some(None) => {}
                        None => return Err(err(line, format!("unknown row {}", pair[0]))),
                    }
                }
            }
            "RHS" => {
                let pairs = if tokens.len() % 2 == 1 { &tokens[1..] } else { &tokens[..] };
                for pair in pairs.chunks(2) {
                    let v = num(pair[1])?;
                    match row_index.get(pair[0]) {
                        Some(Some(r)) => data.rows[*r].rhs = v,
                        Some(None) => log::warn!("MPS line {line}: objective constant ignored"),
                        None => return Err(err(line, format!("unknown row {}", pair[0]))),
                    }
                }
            }
            "BOUNDS" => {
                if tokens.len() < 3 {
                    return Err(err(line, "expected bound type, set and column".into()));
                }
                let kind = tokens[0].to_ascii_uppercase();
                let col = *col_index.get(tokens[2]).ok_or_else(|| err(line, format!("unknown column {}", tokens[2])))?;
                let value = match tokens.get(3) {
                    Some(s) => {
                        let v: T = num(s)?;
                        Some(if v.is_zero() {
                            Rational0::Zero
                        } else if v.is_one() {
                            Rational0::One
                        } else {
                            Rational0::Other
                        })
                    }
                    None => None,
                };
                let c = &mut data.columns[col];
                match (kind.as_str(), value) {
                    ("BV", _) => c.binary = true,
                    ("UP", Some(v)) | ("UI", Some(v)) => c.upper = Some(v),
                    ("LO", Some(v)) | ("LI", Some(v)) => c.lower = Some(v),
                    ("FX", Some(v)) => {
                        c.lower = Some(v);
                        c.upper = Some(v);
                    }
                    ("FR", _) | ("MI", _) | ("PL", _) => c.upper = Some(Rational0::Other),
                    (k, _) => return Err(err(line, format!("unsupported bound {k}"))),
                }
            }
            other => return Err(err(line, format!("data outside a section ({other:?})"))),
        }
    }
    if !ended {
        return Err(err(text.lines().count(), "missing ENDATA".into()));
    }
    for (j, c) in data.columns.iter().enumerate() {
        let binary = c.binary
            || (c.integer
                && matches!(c.lower, None | Some(Rational0::Zero))
                && c.upper == Some(Rational0::One));
        if !binary {
            let line = text.lines().position(|l| l.split_whitespace().next() == Some(c.name.as_str())).map_or(0, |p| p + 1);
            return Err(err(line, format!("variable {} (column {j}) is not binary", c.name)));
        }
    }
    Ok(data)
}

struct Aux<T> {
    n: Option<usize>,
    m: Option<usize>,
    columns: Vec<usize>,
    rows: Vec<usize>,
    objective: Vec<T>,
    sense: i64,
}

fn parse_aux<T: Scalar>(text: &str) -> Result<Aux<T>, IoError> {
    let mut aux = Aux { n: None, m: None, columns: Vec::new(), rows: Vec::new(), objective: Vec::new(), sense: 1 };
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() || tokens[0].starts_with('#') {
            continue;
        }
        let err = |message: String| IoError::Aux { line, message };
        if tokens.len() != 2 {
            return Err(err(format!("expected \"KEY value\", found {raw:?}")));
        }
        let int = || tokens[1].parse::<i64>().map_err(|_| err(format!("bad integer {:?}", tokens[1])));
        let index = || tokens[1].parse::<usize>().map_err(|_| err(format!("bad index {:?}", tokens[1])));
        match tokens[0] {
            "N" => aux.n = Some(index()?),
            "M" => aux.m = Some(index()?),
            "LC" => aux.columns.push(index()?),
            "LR" => aux.rows.push(index()?),
            "LO" => aux.objective.push(T::parse_text(tokens[1]).ok_or_else(|| err(format!("bad number {:?}", tokens[1])))?),
            "OS" => {
                aux.sense = int()?;
                if aux.sense != 1 && aux.sense != -1 {
                    return Err(err(format!("objective sense must be 1 or -1, found {}", aux.sense)));
                }
            }
            k => return Err(err(format!("unknown key {k}"))),
        }
    }
    Ok(aux)
}

/// Reads an MPS model whose AUX file names the follower columns, rows and
/// objective. `<=` rows are negated and equality rows become two `>=`
/// rows.
pub fn parse_mps_aux<T: Scalar>(mps: &str, aux: &str) -> Result<BilevelInstance<T>, IoError> {
    let data: MpsData<T> = parse_mps(mps)?;
    let aux: Aux<T> = parse_aux(aux)?;
    let aux_err = |message: String| IoError::Aux { line: 0, message };
    let n_cols = data.columns.len();
    if let Some(n) = aux.n {
        if n != aux.columns.len() {
            return Err(aux_err(format!("N is {n} but {} LC lines are given", aux.columns.len())));
        }
    }
    if let Some(m) = aux.m {
        if m != aux.rows.len() {
            return Err(aux_err(format!("M is {m} but {} LR lines are given", aux.rows.len())));
        }
    }
    if aux.objective.len() != aux.columns.len() {
        return Err(aux_err(format!("{} LO values for {} follower columns", aux.objective.len(), aux.columns.len())));
    }
    let mut is_follower = vec![false; n_cols];
    for &j in &aux.columns {
        if j >= n_cols {
            return Err(aux_err(format!("follower column {j} out of range (MPS has {n_cols})")));
        }
        if is_follower[j] {
            return Err(aux_err(format!("follower column {j} listed twice")));
        }
        is_follower[j] = true;
    }
    let mut is_link = vec![false; data.rows.len()];
    for &i in &aux.rows {
        if i >= data.rows.len() {
            return Err(aux_err(format!("follower row {i} out of range (MPS has {})", data.rows.len())));
        }
        is_link[i] = true;
    }
    let leader_cols: Vec<usize> = (0..n_cols).filter(|j| !is_follower[*j]).collect();
    let follower_cols = aux.columns.clone();

    let sign = |flip: bool, v: T| if flip { -v } else { v };
    let obj = |j: &usize| sign(data.maximize, data.objective.get(j).cloned().unwrap_or_else(T::zero));
    let c: Vec<T> = leader_cols.iter().map(obj).collect();
    let p: Vec<T> = follower_cols.iter().map(obj).collect();
    let d: Vec<T> = aux.objective.iter().map(|v| sign(aux.sense == -1, v.clone())).collect();

    let (mut a, mut b, mut rhs) = (Vec::new(), Vec::new(), Vec::new());
    let (mut gx, mut gy, mut h) = (Vec::new(), Vec::new(), Vec::new());
    for (i, row) in data.rows.iter().enumerate() {
        let pick = |cols: &[usize], flip: bool| -> Vec<T> {
            cols.iter().map(|j| sign(flip, row.coefs.get(j).cloned().unwrap_or_else(T::zero))).collect()
        };
        let flips: &[bool] = match row.kind {
            RowKind::Ge => &[false],
            RowKind::Le => &[true],
            RowKind::Eq => &[false, true],
        };
        for &flip in flips {
            let (lx, ly, r) = (pick(&leader_cols, flip), pick(&follower_cols, flip), sign(flip, row.rhs.clone()));
            if is_link[i] {
                a.push(lx);
                b.push(ly);
                rhs.push(r);
            } else {
                gx.push(lx);
                gy.push(ly);
                h.push(r);
            }
        }
    }
    if rhs.is_empty() || c.is_empty() || d.is_empty() {
        return Err(aux_err("the instance needs leader columns, follower columns and follower rows".into()));
    }
    Ok(BilevelInstance::new(data.name, c, p, d, a, b, rhs).with_leader_rows(gx, gy, h))
}
