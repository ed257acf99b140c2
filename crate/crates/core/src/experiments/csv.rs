use std::fs;
use std::path::{Path, PathBuf};

use super::RunError;

/// Nine significant digits, `%g` style: fixed notation for exponents in
/// `[-4, 9)`, scientific otherwise, trailing zeros dropped.
pub fn fmt_float(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", strip_zeros(mantissa), exp.abs())
    } else {
        strip_zeros(&format!("{x:.*}", (8 - exp) as usize)).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// In-memory CSV with LF line endings, written in one go.
pub(crate) struct Table {
    text: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::F(x) => self.text.push_str(&fmt_float(*x)),
                Cell::U(n) => self.text.push_str(&n.to_string()),
                Cell::S(s) => self.text.push_str(s),
            }
        }
        self.text.push('\n');
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf, RunError> {
        write_file(dir, name, &self.text)
    }
}

pub(crate) enum Cell<'a> {
    F(f64),
    U(usize),
    S(&'a str),
}

pub(crate) fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, RunError> {
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| RunError::io(&path, e))?;
    Ok(path)
}
