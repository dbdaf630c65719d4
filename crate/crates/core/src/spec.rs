//! Tokenizer for the `kind:key=value,...` spec strings used by bodies, grids and rules.

use crate::error::{spec_err, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SpecString {
    pub kind: String,
    pub args: Vec<(String, String)>,
}

impl SpecString {
    pub fn parse(input: &str) -> Result<Self> {
        let s = input.trim();
        if s.is_empty() {
            return Err(spec_err(input, "empty spec"));
        }
        let (kind, rest) = match s.find(':') {
            Some(i) => (&s[..i], &s[i + 1..]),
            None => (s, ""),
        };
        let kind = kind.trim();
        if kind.is_empty() || !kind.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(spec_err(kind, "invalid kind"));
        }
        let mut args = Vec::new();
        for part in split_top_level(rest, ',')? {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let eq = part.find('=').ok_or_else(|| spec_err(part, "expected key=value"))?;
            let key = part[..eq].trim();
            let value = strip_brackets(part[eq + 1..].trim());
            if key.is_empty() {
                return Err(spec_err(part, "missing key"));
            }
            if args.iter().any(|(k, _): &(String, String)| k == key) {
                return Err(spec_err(key, "duplicate key"));
            }
            args.push((key.to_string(), value.to_string()));
        }
        Ok(Self {
            kind: kind.to_string(),
            args,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.args.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| spec_err(format!("{}:{key}", self.kind), "missing required key"))
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(parse_number).transpose()
    }

    pub fn require_number(&self, key: &str) -> Result<f64> {
        parse_number(self.require(key)?)
    }

    pub fn count(&self, key: &str) -> Result<Option<u64>> {
        match self.number(key)? {
            None => Ok(None),
            Some(v) if v >= 0.0 && v.fract() == 0.0 && v < 9.0e15 => Ok(Some(v as u64)),
            Some(_) => Err(spec_err(self.get(key).unwrap_or(""), "expected a nonnegative integer")),
        }
    }

    /// Rejects keys outside `allowed`.
    pub fn only(&self, allowed: &[&str]) -> Result<()> {
        for (k, _) in &self.args {
            if !allowed.contains(&k.as_str()) {
                return Err(spec_err(k.as_str(), format!("unknown key for `{}`", self.kind)));
            }
        }
        Ok(())
    }
}

/// Parses `4e6`, `2^20`, `0.05` and plain integers.
pub fn parse_number(token: &str) -> Result<f64> {
    let t = token.trim();
    let value = if let Some((b, e)) = t.split_once('^') {
        let b: f64 = b.trim().parse().map_err(|_| spec_err(t, "bad number"))?;
        let e: f64 = e.trim().parse().map_err(|_| spec_err(t, "bad number"))?;
        b.powf(e)
    } else {
        t.parse::<f64>().map_err(|_| spec_err(t, "bad number"))?
    };
    if !value.is_finite() {
        return Err(spec_err(t, "number is not finite"));
    }
    Ok(value)
}

pub(crate) fn split_top_level(s: &str, sep: char) -> Result<Vec<&str>> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(spec_err(&s[..=i], "unbalanced bracket"));
                }
            }
            c if c == sep && depth == 0 => {
                out.push(&s[start..i]);
                start = i + c.len_utf8();
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(spec_err(s, "unbalanced bracket"));
    }
    out.push(&s[start..]);
    Ok(out)
}

fn strip_brackets(v: &str) -> &str {
    let b = v.as_bytes();
    if b.len() >= 2
        && ((b[0] == b'[' && b[b.len() - 1] == b']') || (b[0] == b'(' && b[b.len() - 1] == b')'))
        && matching_close(v) == Some(v.len() - 1)
    {
        v[1..v.len() - 1].trim()
    } else {
        v
    }
}

fn matching_close(v: &str) -> Option<usize> {
    let mut depth = 0;
    for (i, c) in v.char_indices() {
        match c {
            '[' | '(' => depth += 1,
            ']' | ')' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

/// Formats a float so that it parses back to the same bits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_values() {
        let s = SpecString::parse("scale:base=[clq:n=4,q=4],factor=0.9").unwrap();
        assert_eq!(s.kind, "scale");
        assert_eq!(s.get("base"), Some("clq:n=4,q=4"));
        assert_eq!(s.require_number("factor").unwrap(), 0.9);
        let s = SpecString::parse("mollify:base=(ball:dim=4),width=0.1").unwrap();
        assert_eq!(s.get("base"), Some("ball:dim=4"));
    }

    #[test]
    fn numbers() {
        assert_eq!(parse_number("4e6").unwrap(), 4e6);
        assert_eq!(parse_number("2^20").unwrap(), 1048576.0);
        assert!(parse_number("abc").is_err());
        assert!(parse_number("1e999").is_err());
    }

    #[test]
    fn errors_name_token() {
        let e = SpecString::parse("ball:dim").unwrap_err().to_string();
        assert!(e.contains("dim"), "{e}");
        assert!(SpecString::parse("ball:dim=[4").is_err());
        assert!(SpecString::parse("ball:dim=4,dim=6").is_err());
    }
}
