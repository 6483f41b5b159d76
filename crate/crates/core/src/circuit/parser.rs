//! SPICE-like line grammar: parsing and rendering.
//!
//! ```text
//! R<name> n+ n- <value>
//! C<name> n+ n- <value>
//! V<name> n+ n- [DC v] [SIN(off amp freq)] [AC mag [phase]]
//! M<name> d g s <model> [tubes=<int>] [pol=N|P]
//! X<name> inA inB out SUMMER [mode=phys|behav] [c=<F>] [cgnd=<F>] [rbias=<ohms>] [vbias=<V>]
//! .model <name> cnfet n=<int> m=<int> [pitch=] [lch=] [kTube=] [lambda=] [ceff=] [efo=] [a=] [vpi=] [temp=]
//! .title <text>
//! .end
//! ```

use std::fmt::Write as _;

use thiserror::Error;

use super::{CircuitError, ElementKind, Netlist, SourceShape, Summer, SummerMode};
use crate::cnfet::{CntParams, Polarity};

#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownModel,
    DuplicateName,
    NonPositive,
    InvalidModel,
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in line.char_indices() {
        let sep = ch.is_whitespace() || ch == '(' || ch == ')' || ch == ',';
        match (sep, start) {
            (true, Some(s)) => {
                out.push(Token {
                    text: &line[s..i],
                    column: s + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &line[s..],
            column: s + 1,
        });
    }
    out
}

/// Parses a number with an optional SPICE scale suffix (f p n u m k MEG G T).
///
/// Trailing unit letters after the suffix are ignored, so `5fF` is 5e-15.
pub fn parse_value(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let mut i = 0;
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        i += 1;
    }
    let digits_start = i;
    while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
        i += 1;
    }
    if i == digits_start {
        return None;
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    let mantissa: f64 = text[..i].parse().ok()?;
    let rest = text[i..].to_ascii_lowercase();
    if !rest.chars().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let scale = if rest.starts_with("meg") {
        1e6
    } else {
        match rest.chars().next() {
            None => 1.0,
            Some('f') => 1e-15,
            Some('p') => 1e-12,
            Some('n') => 1e-9,
            Some('u') => 1e-6,
            Some('m') => 1e-3,
            Some('k') => 1e3,
            Some('g') => 1e9,
            Some('t') => 1e12,
            // bare unit letters such as `V` or `ohm`
            Some(_) => 1.0,
        }
    };
    Some(mantissa * scale)
}

struct LineCtx<'a> {
    line: usize,
    tokens: Vec<Token<'a>>,
}

impl<'a> LineCtx<'a> {
    fn err(&self, column: usize, kind: ParseErrorKind, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.line,
            column,
            message: message.into(),
            kind,
        }
    }

    fn syntax(&self, column: usize, message: impl Into<String>) -> ParseError {
        self.err(column, ParseErrorKind::Syntax, message)
    }

    fn end_column(&self) -> usize {
        self.tokens
            .last()
            .map(|t| t.column + t.text.len())
            .unwrap_or(1)
    }

    fn token(&self, i: usize, what: &str) -> Result<Token<'a>, ParseError> {
        self.tokens
            .get(i)
            .copied()
            .ok_or_else(|| self.syntax(self.end_column(), format!("expected {what}")))
    }

    fn value(&self, i: usize, what: &str) -> Result<f64, ParseError> {
        let t = self.token(i, what)?;
        parse_value(t.text).ok_or_else(|| self.syntax(t.column, format!("invalid {what} `{}`", t.text)))
    }

    fn value_token(&self, t: Token<'_>, what: &str) -> Result<f64, ParseError> {
        parse_value(t.text).ok_or_else(|| self.syntax(t.column, format!("invalid {what} `{}`", t.text)))
    }

    fn key_values(&self, from: usize) -> Result<Vec<(String, Token<'a>, usize)>, ParseError> {
        let mut out = Vec::new();
        for t in &self.tokens[from..] {
            let Some((k, v)) = t.text.split_once('=') else {
                return Err(self.syntax(t.column, format!("expected key=value, found `{}`", t.text)));
            };
            if v.is_empty() {
                return Err(self.syntax(t.column, format!("missing value for `{k}`")));
            }
            out.push((
                k.to_ascii_lowercase(),
                Token {
                    text: v,
                    column: t.column + k.len() + 1,
                },
                t.column,
            ));
        }
        Ok(out)
    }

    fn circuit_error(&self, column: usize, e: CircuitError) -> ParseError {
        let kind = match e {
            CircuitError::DuplicateName(_) => ParseErrorKind::DuplicateName,
            CircuitError::NonPositive { .. }
            | CircuitError::InvalidTubes { .. }
            | CircuitError::InvalidFrequency { .. } => ParseErrorKind::NonPositive,
            CircuitError::Model { .. } => ParseErrorKind::InvalidModel,
            _ => ParseErrorKind::Syntax,
        };
        self.err(column, kind, e.to_string())
    }
}

fn parse_model(ctx: &LineCtx<'_>) -> Result<(String, CntParams), ParseError> {
    let name = ctx.token(1, "model name")?;
    let kind = ctx.token(2, "model type")?;
    if !kind.text.eq_ignore_ascii_case("cnfet") {
        return Err(ctx.syntax(kind.column, format!("unsupported model type `{}`", kind.text)));
    }
    let mut p = CntParams::default();
    let mut chirality = (false, false);
    for (key, value, column) in ctx.key_values(3)? {
        let integer = |t: Token<'_>| -> Result<u32, ParseError> {
            t.text
                .parse::<u32>()
                .map_err(|_| ctx.syntax(t.column, format!("`{key}` expects a non-negative integer")))
        };
        match key.as_str() {
            "n" => {
                p.n = integer(value)?;
                chirality.0 = true;
            }
            "m" => {
                p.m = integer(value)?;
                chirality.1 = true;
            }
            "pitch" => p.pitch = ctx.value_token(value, "pitch")?,
            "lch" => p.lch = ctx.value_token(value, "lch")?,
            "ktube" => p.k_tube = ctx.value_token(value, "kTube")?,
            "lambda" => p.lambda = ctx.value_token(value, "lambda")?,
            "ceff" => p.c_eff = ctx.value_token(value, "ceff")?,
            "efo" => p.efo = ctx.value_token(value, "efo")?,
            "a" => p.a = ctx.value_token(value, "a")?,
            "vpi" => p.v_pi = ctx.value_token(value, "vpi")?,
            "temp" => p.temperature_k = ctx.value_token(value, "temp")?,
            _ => return Err(ctx.syntax(column, format!("unknown model parameter `{key}`"))),
        }
    }
    if !(chirality.0 && chirality.1) {
        return Err(ctx.syntax(name.column, "cnfet model requires n= and m="));
    }
    p.validate()
        .map_err(|e| ctx.err(name.column, ParseErrorKind::InvalidModel, format!("model `{}`: {e}", name.text)))?;
    Ok((name.text.to_string(), p))
}

fn parse_source_shape(ctx: &LineCtx<'_>) -> Result<SourceShape, ParseError> {
    let mut shape = SourceShape::default();
    let mut i = 3;
    let toks = &ctx.tokens;
    while i < toks.len() {
        let t = toks[i];
        let upper = t.text.to_ascii_uppercase();
        match upper.as_str() {
            "DC" => {
                shape.dc = ctx.value(i + 1, "DC value")?;
                i += 2;
            }
            "SIN" => {
                let offset = ctx.value(i + 1, "SIN offset")?;
                let amplitude = ctx.value(i + 2, "SIN amplitude")?;
                let freq_hz = ctx.value(i + 3, "SIN frequency")?;
                shape.sin = Some(super::Sine {
                    offset,
                    amplitude,
                    freq_hz,
                });
                i += 4;
            }
            "AC" => {
                let magnitude = ctx.value(i + 1, "AC magnitude")?;
                let mut phase_deg = 0.0;
                i += 2;
                if let Some(next) = toks.get(i) {
                    if let Some(v) = parse_value(next.text) {
                        phase_deg = v;
                        i += 1;
                    }
                }
                shape.ac = Some(super::AcSpec {
                    magnitude,
                    phase_deg,
                });
            }
            _ if i == 3 => {
                shape.dc = ctx.value_token(t, "source value")?;
                i += 1;
            }
            _ => return Err(ctx.syntax(t.column, format!("unexpected `{}` in source", t.text))),
        }
    }
    Ok(shape)
}

/// Parses netlist text. Model lines may appear anywhere in the file.
pub fn parse_netlist(text: &str) -> Result<Netlist, ParseError> {
    let lines: Vec<LineCtx<'_>> = text
        .lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let trimmed = raw.trim_start();
            if trimmed.is_empty() || trimmed.starts_with('*') {
                return None;
            }
            Some(LineCtx {
                line: i + 1,
                tokens: tokenize(raw),
            })
        })
        .collect();

    let mut netlist = Netlist::new("");
    for ctx in &lines {
        let head = ctx.tokens[0];
        if head.text.eq_ignore_ascii_case(".model") {
            let (name, params) = parse_model(ctx)?;
            if netlist.models.contains_key(&name) {
                return Err(ctx.err(head.column, ParseErrorKind::DuplicateName, format!("duplicate model `{name}`")));
            }
            netlist.models.insert(name, params);
        }
    }

    for ctx in &lines {
        let head = ctx.tokens[0];
        let lower = head.text.to_ascii_lowercase();
        if lower == ".model" || lower == ".end" {
            continue;
        }
        if lower == ".title" {
            netlist.title = ctx
                .tokens
                .get(1)
                .map(|t| {
                    let raw = text.lines().nth(ctx.line - 1).unwrap_or("");
                    raw[t.column - 1..].trim_end().to_string()
                })
                .unwrap_or_default();
            continue;
        }
        if lower.starts_with('.') {
            return Err(ctx.syntax(head.column, format!("unknown directive `{}`", head.text)));
        }
        let name = head.text;
        let kind_letter = name.chars().next().unwrap().to_ascii_uppercase();
        let result = match kind_letter {
            'R' | 'C' => {
                let pos = ctx.token(1, "node")?;
                let neg = ctx.token(2, "node")?;
                let value = ctx.value(3, "component value")?;
                if let Some(extra) = ctx.tokens.get(4) {
                    return Err(ctx.syntax(extra.column, format!("unexpected `{}`", extra.text)));
                }
                let col = ctx.tokens[3].column;
                let r = if kind_letter == 'R' {
                    netlist.resistor(name, pos.text, neg.text, value)
                } else {
                    netlist.capacitor(name, pos.text, neg.text, value)
                };
                r.map_err(|e| ctx.circuit_error(col, e))
            }
            'V' => {
                let pos = ctx.token(1, "node")?;
                let neg = ctx.token(2, "node")?;
                let shape = parse_source_shape(ctx)?;
                netlist
                    .vsource(name, pos.text, neg.text, shape)
                    .map_err(|e| ctx.circuit_error(head.column, e))
            }
            'M' => {
                let d = ctx.token(1, "drain node")?;
                let g = ctx.token(2, "gate node")?;
                let s = ctx.token(3, "source node")?;
                let model = ctx.token(4, "model name")?;
                if !netlist.models.contains_key(model.text) {
                    return Err(ctx.err(
                        model.column,
                        ParseErrorKind::UnknownModel,
                        format!("{name}: unknown model `{}`", model.text),
                    ));
                }
                let mut tubes = 1u32;
                let mut polarity = Polarity::N;
                for (key, value, column) in ctx.key_values(5)? {
                    match key.as_str() {
                        "tubes" => {
                            tubes = value
                                .text
                                .parse::<u32>()
                                .map_err(|_| ctx.syntax(value.column, "tubes expects a positive integer"))?;
                        }
                        "pol" => {
                            polarity = match value.text.to_ascii_uppercase().as_str() {
                                "N" => Polarity::N,
                                "P" => Polarity::P,
                                _ => return Err(ctx.syntax(value.column, "pol expects N or P")),
                            }
                        }
                        _ => return Err(ctx.syntax(column, format!("unknown device parameter `{key}`"))),
                    }
                }
                netlist
                    .cnfet(name, d.text, g.text, s.text, model.text, polarity, tubes)
                    .map_err(|e| ctx.circuit_error(head.column, e))
            }
            'X' => {
                let a = ctx.token(1, "input node")?;
                let b = ctx.token(2, "input node")?;
                let out = ctx.token(3, "output node")?;
                let kind = ctx.token(4, "SUMMER")?;
                if !kind.text.eq_ignore_ascii_case("summer") {
                    return Err(ctx.syntax(kind.column, format!("unknown subcircuit `{}`", kind.text)));
                }
                let mut mode = SummerMode::Physical;
                let mut c = Summer::DEFAULT_C;
                let mut c_gnd = None;
                let mut r_bias = Summer::DEFAULT_R_BIAS;
                let mut v_bias = 0.0;
                for (key, value, column) in ctx.key_values(5)? {
                    match key.as_str() {
                        "mode" => {
                            mode = match value.text.to_ascii_lowercase().as_str() {
                                "phys" | "physical" => SummerMode::Physical,
                                "behav" | "behavioral" => SummerMode::Behavioral,
                                _ => return Err(ctx.syntax(value.column, "mode expects phys or behav")),
                            }
                        }
                        "c" => c = ctx.value_token(value, "c")?,
                        "cgnd" => c_gnd = Some(ctx.value_token(value, "cgnd")?),
                        "rbias" => r_bias = ctx.value_token(value, "rbias")?,
                        "vbias" => v_bias = ctx.value_token(value, "vbias")?,
                        _ => return Err(ctx.syntax(column, format!("unknown summer parameter `{key}`"))),
                    }
                }
                netlist
                    .summer(name, a.text, b.text, out.text, mode, |s| {
                        s.c_in = c;
                        s.c_gnd = c_gnd.unwrap_or(4.0 * c);
                        s.r_bias = r_bias;
                        s.v_bias = v_bias;
                    })
                    .map_err(|e| ctx.circuit_error(head.column, e))
            }
            _ => Err(ctx.syntax(head.column, format!("unknown element type `{name}`"))),
        };
        result?;
    }
    Ok(netlist)
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// Renders a netlist in the grammar accepted by [`parse_netlist`].
pub fn render_netlist(n: &Netlist) -> String {
    let mut out = String::new();
    if !n.title.is_empty() {
        let _ = writeln!(out, ".title {}", n.title);
    }
    for (name, p) in &n.models {
        let _ = writeln!(
            out,
            ".model {name} cnfet n={} m={} a={} vpi={} pitch={} lch={} kTube={} lambda={} ceff={} efo={} temp={}",
            p.n,
            p.m,
            num(p.a),
            num(p.v_pi),
            num(p.pitch),
            num(p.lch),
            num(p.k_tube),
            num(p.lambda),
            num(p.c_eff),
            num(p.efo),
            num(p.temperature_k),
        );
    }
    let node = |id: super::NodeId| n.node_name(id).to_string();
    for e in &n.elements {
        match &e.kind {
            ElementKind::Resistor { pos, neg, ohms } => {
                let _ = writeln!(out, "{} {} {} {}", e.name, node(*pos), node(*neg), num(*ohms));
            }
            ElementKind::Capacitor { pos, neg, farads } => {
                let _ = writeln!(out, "{} {} {} {}", e.name, node(*pos), node(*neg), num(*farads));
            }
            ElementKind::VSource { pos, neg, shape } => {
                let _ = write!(out, "{} {} {} DC {}", e.name, node(*pos), node(*neg), num(shape.dc));
                if let Some(s) = shape.sin {
                    let _ = write!(out, " SIN({} {} {})", num(s.offset), num(s.amplitude), num(s.freq_hz));
                }
                if let Some(a) = shape.ac {
                    let _ = write!(out, " AC {} {}", num(a.magnitude), num(a.phase_deg));
                }
                out.push('\n');
            }
            ElementKind::Cnfet {
                drain,
                gate,
                source,
                model,
                polarity,
                tubes,
            } => {
                let _ = writeln!(
                    out,
                    "{} {} {} {} {model} tubes={tubes} pol={polarity}",
                    e.name,
                    node(*drain),
                    node(*gate),
                    node(*source)
                );
            }
            ElementKind::Summer(s) => {
                let mode = match s.mode {
                    SummerMode::Behavioral => "behav",
                    SummerMode::Physical => "phys",
                };
                let _ = write!(
                    out,
                    "{} {} {} {} SUMMER mode={mode} c={}",
                    e.name,
                    node(s.in_a),
                    node(s.in_b),
                    node(s.out),
                    num(s.c_in)
                );
                if s.c_gnd != 4.0 * s.c_in {
                    let _ = write!(out, " cgnd={}", num(s.c_gnd));
                }
                let _ = writeln!(out, " rbias={} vbias={}", num(s.r_bias), num(s.v_bias));
            }
        }
    }
    out.push_str(".end\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::NodeId;

    #[test]
    fn unit_suffixes() {
        let cases = [
            ("1k", 1e3),
            ("5f", 5e-15),
            ("5fF", 5e-15),
            ("2.2p", 2.2e-12),
            ("3n", 3e-9),
            ("4u", 4e-6),
            ("7m", 7e-3),
            ("1MEG", 1e6),
            ("1meg", 1e6),
            ("2G", 2e9),
            ("1T", 1e12),
            ("-0.4", -0.4),
            ("1e3", 1e3),
            ("1.5e-3k", 1.5),
            ("10ohm", 10.0),
        ];
        for (text, want) in cases {
            let got = parse_value(text).unwrap();
            assert!((got - want).abs() <= 1e-12 * want.abs(), "{text}: {got}");
        }
        assert!(parse_value("abc").is_none());
        assert!(parse_value("1k2").is_none());
    }

    #[test]
    fn resistor_line() {
        let n = parse_netlist("R1 1 0 1k\n").unwrap();
        match &n.elements()[0].kind {
            ElementKind::Resistor { pos, neg, ohms } => {
                assert_eq!(n.node_name(*pos), "1");
                assert_eq!(*neg, NodeId::GROUND);
                assert_eq!(*ohms, 1000.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn capacitor_line() {
        let n = parse_netlist("C1 2 0 5f").unwrap();
        match &n.elements()[0].kind {
            ElementKind::Capacitor { farads, .. } => assert!((farads - 5e-15).abs() < 1e-30),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn negative_resistor_rejected() {
        let e = parse_netlist("R1 1 0 -5").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::NonPositive);
        assert_eq!(e.line, 1);
    }

    #[test]
    fn unknown_model_and_duplicate() {
        let e = parse_netlist("* c\nM1 d g s nope\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::UnknownModel);
        assert_eq!((e.line, e.column), (2, 10));
        let e = parse_netlist("R1 a 0 1\nR1 b 0 2\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::DuplicateName);
        assert_eq!(e.line, 2);
    }

    #[test]
    fn syntax_error_location() {
        let e = parse_netlist("R1 a 0 1k\nV1 a 0 DC\n").unwrap_err();
        assert_eq!(e.kind, ParseErrorKind::Syntax);
        assert_eq!(e.line, 2);
        let e = parse_netlist("Q1 a b c").unwrap_err();
        assert_eq!((e.line, e.column), (1, 1));
    }

    #[test]
    fn full_grammar() {
        let text = "\
.title demo circuit
* supplies
VDD vdd 0 0.9
V1 in 0 DC 0 SIN(0 0.4 1MEG) AC 1 90
.model cnt cnfet n=25 m=0 kTube=1e-4 lambda=0
M1 out g vss cnt tubes=2 pol=P
X1 in 0 g SUMMER mode=behav c=5f vbias=-0.3
R1 vdd out 10k
.end
";
        let n = parse_netlist(text).unwrap();
        assert_eq!(n.title, "demo circuit");
        assert_eq!(n.elements().len(), 5);
        assert_eq!(n.model("cnt").unwrap().k_tube, 1e-4);
        let shape = n.source_shape("V1").unwrap();
        assert_eq!(shape.sin.unwrap().freq_hz, 1e6);
        assert_eq!(shape.ac.unwrap().phase_deg, 90.0);
        assert_eq!(n.source_shape("VDD").unwrap().dc, 0.9);
        match &n.element("X1").unwrap().kind {
            ElementKind::Summer(s) => {
                assert_eq!(s.mode, SummerMode::Behavioral);
                assert_eq!(s.v_bias, -0.3);
                assert!((s.c_gnd / 20e-15 - 1.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let again = parse_netlist(&n.render()).unwrap();
        assert_eq!(again, n);
    }
}
