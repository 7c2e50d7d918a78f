//! Reader and writer for a subset of the CPLEX LP text format.
//!
//! Supported sections: `Minimize`, `Subject To`, `Bounds`, `Binary`,
//! `General`, `End`. The objective may carry a bare constant and a diagonal
//! quadratic block `[ q x ^2 ] / 2`. Coefficients are written with 17
//! significant digits so a round trip reproduces every `f64` exactly.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MilpModel, ModelError, ModelSource, Sense, Variable, VariableRef};

const WRAP: usize = 240;

fn num(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x:.16e}")
    }
}

fn signed(x: f64) -> String {
    if x.is_sign_negative() {
        format!("- {}", num(-x))
    } else {
        format!("+ {}", num(x))
    }
}

fn col_name(model: &MilpModel, col: usize) -> String {
    let name = &model.variables[col].name;
    if name.is_empty() {
        format!("x{col}")
    } else {
        name.clone()
    }
}

/// Appends `piece` to `out`, breaking the line when it grows too long.
fn push_wrapped(out: &mut String, line_len: &mut usize, piece: &str) {
    if *line_len + piece.len() + 1 > WRAP {
        out.push_str("\n   ");
        *line_len = 3;
    }
    out.push(' ');
    out.push_str(piece);
    *line_len += piece.len() + 1;
}

pub fn export_lp(model: &MilpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ {}", model.name);
    out.push_str("Minimize\n obj:");
    let mut len = 5;
    // Every column appears in the objective so that re-reading preserves
    // the column order.
    for (c, v) in model.variables.iter().enumerate() {
        push_wrapped(&mut out, &mut len, &format!("{} {}", signed(v.cost), col_name(model, c)));
    }
    if model.constant != 0.0 {
        push_wrapped(&mut out, &mut len, &signed(model.constant));
    }
    let quad: Vec<_> = model.quadratic.iter().filter(|&&(_, q)| q != 0.0).collect();
    if !quad.is_empty() {
        push_wrapped(&mut out, &mut len, "+ [");
        for &&(c, q) in &quad {
            push_wrapped(&mut out, &mut len, &format!("{} {} ^2", signed(2.0 * q), col_name(model, c)));
        }
        push_wrapped(&mut out, &mut len, "] / 2");
    }
    out.push_str("\nSubject To\n");
    for (r, c) in model.constraints.iter().enumerate() {
        let name = if c.name.is_empty() { format!("c{r}") } else { c.name.clone() };
        let _ = write!(out, " {name}:");
        let mut len = name.len() + 2;
        if c.terms.is_empty() {
            push_wrapped(&mut out, &mut len, &format!("+ 0 {}", col_name(model, 0)));
        }
        for &(j, a) in &c.terms {
            push_wrapped(&mut out, &mut len, &format!("{} {}", signed(a), col_name(model, j)));
        }
        let sense = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        push_wrapped(&mut out, &mut len, &format!("{sense} {}", num(c.rhs)));
        out.push('\n');
    }
    out.push_str("Bounds\n");
    for (c, v) in model.variables.iter().enumerate() {
        let name = col_name(model, c);
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", num(v.lower), num(v.upper));
        }
    }
    let is_binary = |v: &Variable| v.integer && v.lower >= 0.0 && v.upper <= 1.0;
    let binaries: Vec<String> = (0..model.num_vars())
        .filter(|&c| is_binary(&model.variables[c]))
        .map(|c| col_name(model, c))
        .collect();
    let generals: Vec<String> = (0..model.num_vars())
        .filter(|&c| model.variables[c].integer && !is_binary(&model.variables[c]))
        .map(|c| col_name(model, c))
        .collect();
    for (title, list) in [("Binary", binaries), ("General", generals)] {
        if list.is_empty() {
            continue;
        }
        let _ = writeln!(out, "{title}");
        let mut len = 0;
        for name in &list {
            push_wrapped(&mut out, &mut len, name);
        }
        out.push('\n');
    }
    out.push_str("End\n");
    out
}

pub fn write_lp_file(model: &MilpModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, export_lp(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_lp_file(path: impl AsRef<Path>) -> Result<MilpModel, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut model = parse_lp(&text)?;
    if let Some(stem) = path.file_stem() {
        model.name = stem.to_string_lossy().into_owned();
    }
    Ok(model)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Colon,
    Sense(Sense),
    Open,
    Close,
    Caret,
    Slash,
    Star,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Binary,
    General,
    End,
}

fn err(line: usize, message: impl Into<String>) -> ModelError {
    ModelError::LpFormat {
        line,
        message: message.into(),
    }
}

fn tokenize(text: &str, line: usize, out: &mut Vec<(Tok, usize)>) -> Result<(), ModelError> {
    let chars: Vec<char> = text.chars().collect();
    let mut k = 0;
    let special = |c: char| "+-:<>=[]^/*".contains(c) || c.is_whitespace();
    while k < chars.len() {
        let c = chars[k];
        let tok = match c {
            _ if c.is_whitespace() => {
                k += 1;
                continue;
            }
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            ':' => Tok::Colon,
            '[' => Tok::Open,
            ']' => Tok::Close,
            '^' => Tok::Caret,
            '/' => Tok::Slash,
            '*' => Tok::Star,
            '<' | '>' | '=' => {
                let mut s = String::from(c);
                if k + 1 < chars.len() && "<>=".contains(chars[k + 1]) {
                    s.push(chars[k + 1]);
                    k += 1;
                }
                let sense = match s.as_str() {
                    "<" | "<=" | "=<" => Sense::Le,
                    ">" | ">=" | "=>" => Sense::Ge,
                    "=" | "==" => Sense::Eq,
                    other => return Err(err(line, format!("unknown operator `{other}`"))),
                };
                k += 1;
                out.push((Tok::Sense(sense), line));
                continue;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = k;
                while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                    k += 1;
                }
                if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                    let save = k;
                    k += 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                    } else {
                        k = save;
                    }
                }
                let s: String = chars[start..k].iter().collect();
                let v = s
                    .parse::<f64>()
                    .map_err(|_| err(line, format!("malformed number `{s}`")))?;
                out.push((Tok::Num(v), line));
                continue;
            }
            _ => {
                let start = k;
                while k < chars.len() && !special(chars[k]) {
                    k += 1;
                }
                out.push((Tok::Ident(chars[start..k].iter().collect()), line));
                continue;
            }
        };
        out.push((tok, line));
        k += 1;
    }
    Ok(())
}

/// Splits a line into a section keyword (if any) and the remaining text.
fn section_of(line: &str) -> Option<(Section, &str)> {
    let lower = line.to_ascii_lowercase();
    let words: Vec<&str> = lower.split_whitespace().collect();
    let first = *words.first()?;
    let skip_words = |n: usize| {
        let mut rest = line.trim_start();
        for _ in 0..n {
            rest = rest.trim_start();
            let cut = rest.find(char::is_whitespace).unwrap_or(rest.len());
            rest = &rest[cut..];
        }
        rest
    };
    let section = match first {
        "minimize" | "minimise" | "minimum" | "min" => (Section::Objective, skip_words(1)),
        "subject" | "such" if words.get(1) == Some(&"to") || words.get(1) == Some(&"that") => {
            (Section::Rows, skip_words(2))
        }
        "st" | "s.t." | "st." => (Section::Rows, skip_words(1)),
        "bounds" | "bound" => (Section::Bounds, skip_words(1)),
        "binary" | "binaries" | "bin" => (Section::Binary, skip_words(1)),
        "general" | "generals" | "gen" | "integer" | "integers" => (Section::General, skip_words(1)),
        "end" => (Section::End, skip_words(1)),
        _ => return None,
    };
    Some(section)
}

struct Reader {
    model: MilpModel,
    names: HashMap<String, usize>,
}

impl Reader {
    fn col(&mut self, name: &str) -> usize {
        if let Some(&c) = self.names.get(name) {
            return c;
        }
        self.names.insert(name.to_string(), self.model.num_vars());
        self.model.add_var(Variable {
            name: name.to_string(),
            lower: 0.0,
            upper: f64::INFINITY,
            integer: false,
            cost: 0.0,
            tag: VariableRef::from_name(name),
        })
    }
}

/// Parses a linear expression up to (not including) a sense token or the
/// end. Returns linear terms, a constant and diagonal quadratic terms.
type Expr = (Vec<(String, f64)>, f64, Vec<(String, f64)>);

fn parse_expr(toks: &[(Tok, usize)], pos: &mut usize) -> Result<Expr, ModelError> {
    let mut linear = Vec::new();
    let mut constant = 0.0;
    let mut quad = Vec::new();
    while *pos < toks.len() {
        let line = toks[*pos].1;
        let mut sign = 1.0;
        let mut saw_sign = false;
        while let Some((Tok::Plus | Tok::Minus, _)) = toks.get(*pos) {
            if toks[*pos].0 == Tok::Minus {
                sign = -sign;
            }
            saw_sign = true;
            *pos += 1;
        }
        match toks.get(*pos).map(|t| &t.0) {
            Some(Tok::Sense(_)) | None => {
                if saw_sign {
                    return Err(err(line, "dangling sign"));
                }
                break;
            }
            Some(Tok::Open) => {
                *pos += 1;
                let mut inner = Vec::new();
                loop {
                    let mut s = 1.0;
                    while let Some((Tok::Plus | Tok::Minus, _)) = toks.get(*pos) {
                        if toks[*pos].0 == Tok::Minus {
                            s = -s;
                        }
                        *pos += 1;
                    }
                    let mut coef = 1.0;
                    if let Some((Tok::Num(v), _)) = toks.get(*pos) {
                        coef = *v;
                        *pos += 1;
                    }
                    match toks.get(*pos) {
                        Some((Tok::Close, _)) => {
                            *pos += 1;
                            break;
                        }
                        Some((Tok::Ident(name), l)) => {
                            let name = name.clone();
                            *pos += 1;
                            match (toks.get(*pos), toks.get(*pos + 1)) {
                                (Some((Tok::Caret, _)), Some((Tok::Num(p), _))) if *p == 2.0 => *pos += 2,
                                _ => return Err(err(*l, "only diagonal squared terms are supported")),
                            }
                            inner.push((name, s * coef));
                        }
                        _ => return Err(err(line, "malformed quadratic block")),
                    }
                }
                let halved = matches!(
                    (toks.get(*pos), toks.get(*pos + 1)),
                    (Some((Tok::Slash, _)), Some((Tok::Num(d), _))) if *d == 2.0
                );
                if halved {
                    *pos += 2;
                }
                let scale = if halved { 0.5 } else { 1.0 };
                quad.extend(inner.into_iter().map(|(n, q)| (n, sign * q * scale)));
            }
            Some(Tok::Num(v)) => {
                let v = *v;
                *pos += 1;
                if let Some((Tok::Star, _)) = toks.get(*pos) {
                    *pos += 1;
                }
                match toks.get(*pos) {
                    Some((Tok::Ident(name), _)) if !is_inf(name) => {
                        linear.push((name.clone(), sign * v));
                        *pos += 1;
                    }
                    _ => constant += sign * v,
                }
            }
            Some(Tok::Ident(name)) => {
                if matches!(toks.get(*pos + 1), Some((Tok::Colon, _))) {
                    // Start of the next named row.
                    break;
                }
                linear.push((name.clone(), sign));
                *pos += 1;
            }
            Some(other) => return Err(err(line, format!("unexpected token {other:?}"))),
        }
    }
    Ok((linear, constant, quad))
}

/// Sums repeated columns, keeping first-appearance order, and drops zeros.
fn combine_in_order(terms: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let mut slot: HashMap<usize, usize> = HashMap::new();
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
    for (c, a) in terms {
        match slot.get(&c) {
            Some(&k) => out[k].1 += a,
            None => {
                slot.insert(c, out.len());
                out.push((c, a));
            }
        }
    }
    out.retain(|&(_, a)| a != 0.0);
    out
}

fn is_inf(name: &str) -> bool {
    matches!(name.to_ascii_lowercase().as_str(), "inf" | "infinity")
}

fn bound_value(toks: &[(Tok, usize)], pos: &mut usize) -> Option<f64> {
    let mut sign = 1.0;
    while let Some((Tok::Plus | Tok::Minus, _)) = toks.get(*pos) {
        if toks[*pos].0 == Tok::Minus {
            sign = -sign;
        }
        *pos += 1;
    }
    match toks.get(*pos) {
        Some((Tok::Num(v), _)) => {
            *pos += 1;
            Some(sign * v)
        }
        Some((Tok::Ident(n), _)) if is_inf(n) => {
            *pos += 1;
            Some(sign * f64::INFINITY)
        }
        _ => None,
    }
}

fn parse_bound_line(reader: &mut Reader, toks: &[(Tok, usize)], line: usize) -> Result<(), ModelError> {
    let mut pos = 0;
    let bad = || err(line, "malformed bound");
    if let Some(lo) = bound_value(toks, &mut pos) {
        // lo <= x [<= hi]
        let Some((Tok::Sense(s1), _)) = toks.get(pos) else { return Err(bad()) };
        let (s1, ident) = (*s1, toks.get(pos + 1));
        let Some((Tok::Ident(name), _)) = ident else { return Err(bad()) };
        let c = reader.col(name);
        pos += 2;
        let v = &mut reader.model.variables[c];
        match s1 {
            Sense::Le => v.lower = lo,
            Sense::Ge => v.upper = lo,
            Sense::Eq => {
                v.lower = lo;
                v.upper = lo;
            }
        }
        if let Some((Tok::Sense(s2), _)) = toks.get(pos) {
            let s2 = *s2;
            pos += 1;
            let hi = bound_value(toks, &mut pos).ok_or_else(bad)?;
            let v = &mut reader.model.variables[c];
            match s2 {
                Sense::Le => v.upper = hi,
                Sense::Ge => v.lower = hi,
                Sense::Eq => return Err(bad()),
            }
        }
    } else {
        let Some((Tok::Ident(name), _)) = toks.first() else { return Err(bad()) };
        let c = reader.col(name);
        pos = 1;
        match toks.get(pos) {
            Some((Tok::Ident(f), _)) if f.eq_ignore_ascii_case("free") => {
                let v = &mut reader.model.variables[c];
                v.lower = f64::NEG_INFINITY;
                v.upper = f64::INFINITY;
                pos += 1;
            }
            Some((Tok::Sense(s), _)) => {
                let s = *s;
                pos += 1;
                let val = bound_value(toks, &mut pos).ok_or_else(bad)?;
                let v = &mut reader.model.variables[c];
                match s {
                    Sense::Le => v.upper = val,
                    Sense::Ge => v.lower = val,
                    Sense::Eq => {
                        v.lower = val;
                        v.upper = val;
                    }
                }
            }
            _ => return Err(bad()),
        }
    }
    if pos != toks.len() {
        return Err(bad());
    }
    Ok(())
}

pub fn parse_lp(text: &str) -> Result<MilpModel, ModelError> {
    let mut reader = Reader {
        model: MilpModel::new("lp", ModelSource::External),
        names: HashMap::new(),
    };
    let mut section = Section::Preamble;
    let mut objective = Vec::new();
    let mut rows = Vec::new();
    let mut bounds: Vec<(Vec<(Tok, usize)>, usize)> = Vec::new();
    let mut ints: Vec<(Tok, usize)> = Vec::new();
    let mut bins: Vec<(Tok, usize)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.split('\\').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let body = match section_of(line) {
            Some((s, rest)) => {
                if s == Section::Objective && section != Section::Preamble {
                    return Err(err(line_no, "objective section must come first"));
                }
                section = s;
                rest
            }
            None if line.trim().to_ascii_lowercase().starts_with("max") => {
                return Err(err(line_no, "only minimization is supported"));
            }
            None => line,
        };
        let target = match section {
            Section::Preamble => return Err(err(line_no, "content before the objective section")),
            Section::End => {
                if body.trim().is_empty() {
                    continue;
                }
                return Err(err(line_no, "content after End"));
            }
            Section::Objective => &mut objective,
            Section::Rows => &mut rows,
            Section::Binary => &mut bins,
            Section::General => &mut ints,
            Section::Bounds => {
                let mut toks = Vec::new();
                tokenize(body, line_no, &mut toks)?;
                if !toks.is_empty() {
                    bounds.push((toks, line_no));
                }
                continue;
            }
        };
        tokenize(body, line_no, target)?;
    }
    if section != Section::End {
        return Err(err(text.lines().count(), "missing End"));
    }

    let mut pos = 0;
    if let (Some((Tok::Ident(_), _)), Some((Tok::Colon, _))) = (objective.first(), objective.get(1)) {
        pos = 2;
    }
    let (linear, constant, quad) = parse_expr(&objective, &mut pos)?;
    if pos != objective.len() {
        return Err(err(objective[pos].1, "unexpected token in objective"));
    }
    for (name, a) in linear {
        let c = reader.col(&name);
        reader.model.variables[c].cost += a;
    }
    reader.model.constant = constant;
    for (name, q) in quad {
        let c = reader.col(&name);
        reader.model.quadratic.push((c, q));
    }

    let mut pos = 0;
    while pos < rows.len() {
        let line = rows[pos].1;
        let mut name = format!("c{}", reader.model.constraints.len());
        if let (Some((Tok::Ident(n), _)), Some((Tok::Colon, _))) = (rows.get(pos), rows.get(pos + 1)) {
            name = n.clone();
            pos += 2;
        }
        let (linear, constant, quad) = parse_expr(&rows, &mut pos)?;
        if !quad.is_empty() {
            return Err(err(line, "quadratic rows are not supported"));
        }
        let Some((Tok::Sense(sense), _)) = rows.get(pos) else {
            return Err(err(line, format!("row `{name}` has no sense")));
        };
        let sense = *sense;
        pos += 1;
        let rhs = bound_value(&rows, &mut pos).ok_or_else(|| err(line, format!("row `{name}` has no right-hand side")))?;
        let terms = linear.into_iter().map(|(n, a)| (reader.col(&n), a)).collect();
        reader.model.add_constraint(name, combine_in_order(terms), sense, rhs - constant);
    }

    for (toks, line) in &bounds {
        parse_bound_line(&mut reader, toks, *line)?;
    }
    for (list, binary) in [(&ints, false), (&bins, true)] {
        for (tok, line) in list {
            let Tok::Ident(name) = tok else {
                return Err(err(*line, "expected a variable name"));
            };
            let c = reader.col(name);
            let v = &mut reader.model.variables[c];
            v.integer = true;
            if binary {
                v.lower = v.lower.max(0.0);
                v.upper = v.upper.min(1.0);
            }
        }
    }
    reader.model.reindex();
    Ok(reader.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Decision, Scope};

    fn sample() -> MilpModel {
        let mut m = MilpModel::new("t", ModelSource::External);
        let y = m.tagged_var(VariableRef::decision(Decision::Y, 0, 0, Scope::Global), 0.0, 1.0, true);
        let q = m.tagged_var(VariableRef::decision(Decision::Q, 0, 0, Scope::Path(3)), 0.0, 12.5, false);
        let f = m.add_var(Variable {
            name: "free_x".into(),
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
            integer: false,
            cost: -0.1,
            tag: None,
        });
        let g = m.add_var(Variable {
            name: "count".into(),
            lower: -2.0,
            upper: 7.0,
            integer: true,
            cost: 0.0,
            tag: None,
        });
        m.variables[y].cost = 100.0 / 3.0;
        m.variables[q].cost = 1e-300;
        m.constant = -4.25;
        m.quadratic.push((q, 0.7));
        m.add_constraint("r0", vec![(q, 1.0), (y, -12.5)], Sense::Le, 0.0);
        m.add_constraint("r1", vec![(f, 1.0), (g, 2.0 / 7.0)], Sense::Ge, -1.0 / 3.0);
        m.add_constraint("r2", vec![(y, 1.0), (g, 1.0)], Sense::Eq, 1.0);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = sample();
        let text = export_lp(&m);
        let back = parse_lp(&text).unwrap();
        assert_eq!(back.variables, m.variables);
        assert_eq!(back.constraints, m.constraints);
        assert_eq!(back.quadratic, m.quadratic);
        assert_eq!(back.constant, m.constant);
        let x = [1.0, 3.0, -2.0, 0.0];
        assert_eq!(back.objective_value(&x), m.objective_value(&x));
    }

    #[test]
    fn hand_written_file() {
        let text = "\\ comment\nMinimize\n obj: 2 x + 3 y - 1\nSubject To\n c1: x + y >= 2\n c2: x - y\n   <= 1\nBounds\n x <= 4\n -1 <= y <= 5\nGeneral\n y\nEnd\n";
        let m = parse_lp(text).unwrap();
        assert_eq!(m.num_vars(), 2);
        assert_eq!(m.constant, -1.0);
        assert_eq!(m.constraints[1].terms, vec![(0, 1.0), (1, -1.0)]);
        assert_eq!(m.variables[1].lower, -1.0);
        assert!(m.variables[1].integer);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = parse_lp("Minimize\n obj: x\nSubject To\n c: x >= \nEnd\n").unwrap_err();
        assert!(matches!(e, ModelError::LpFormat { line: 4, .. }), "{e}");
        assert!(parse_lp("Maximize\n x\nEnd\n").is_err());
        assert!(parse_lp("Minimize\n obj: x\n").is_err());
    }
}
