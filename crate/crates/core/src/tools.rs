//! Deterministic external tools callable from cascades.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use core::fmt;

pub const CALCULATOR: &str = "calculator";

type ToolFn = dyn Fn(&str) -> String + Send + Sync;

/// Named pure text-to-text functions. `calculator` is always present.
#[derive(Clone)]
pub struct ToolRegistry {
    tools: BTreeMap<String, Arc<ToolFn>>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.tools.keys()).finish()
    }
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        let mut tools = Self { tools: BTreeMap::new() };
        tools.register(CALCULATOR, calculator);
        tools
    }

    pub fn register(&mut self, name: impl Into<String>, tool: impl Fn(&str) -> String + Send + Sync + 'static) {
        self.tools.insert(name.into(), Arc::new(tool));
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    pub fn call(&self, name: &str, input: &str) -> Option<String> {
        self.tools.get(name).map(|tool| tool(input))
    }
}

/// Evaluates `+ - * /` arithmetic with parentheses and unary minus.
///
/// Failures are reported in-band as `ERROR: <reason>` so the calling model
/// can see them and recover.
pub fn calculator(expression: &str) -> String {
    match evaluate(expression) {
        Ok(value) => format_number(value),
        Err(reason) => alloc::format!("ERROR: {reason}"),
    }
}

pub fn evaluate(expression: &str) -> Result<f64, String> {
    let mut parser = Parser { src: expression.as_bytes(), pos: 0 };
    let value = parser.expr()?;
    parser.skip_ws();
    match parser.peek() {
        None => Ok(value),
        Some(b')') => Err(alloc::format!("unbalanced ')' at position {}", parser.pos)),
        Some(c) => Err(alloc::format!("unexpected character '{}' at position {}", c as char, parser.pos)),
    }
}

fn format_number(value: f64) -> String {
    if value == crate::math::trunc(value) && value.abs() < 1e15 {
        // avoid "-0"
        alloc::format!("{}", (value as i64))
    } else {
        value.to_string()
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn skip_ws(&mut self) {
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<f64, String> {
        let mut acc = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == b'+' { acc + rhs } else { acc - rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<f64, String> {
        let mut acc = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            if op == b'*' {
                acc *= rhs;
            } else if rhs == 0.0 {
                return Err("division by zero".into());
            } else {
                acc /= rhs;
            }
        }
        Ok(acc)
    }

    fn factor(&mut self) -> Result<f64, String> {
        match self.peek() {
            None => Err("unexpected end of expression".into()),
            Some(b'-') => {
                self.pos += 1;
                Ok(-self.factor()?)
            }
            Some(b'+') => {
                self.pos += 1;
                self.factor()
            }
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                let value = self.expr()?;
                match self.peek() {
                    Some(b')') => {
                        self.pos += 1;
                        Ok(value)
                    }
                    None => Err(alloc::format!("unclosed '(' at position {open}")),
                    Some(c) => Err(alloc::format!("unexpected character '{}' at position {}", c as char, self.pos)),
                }
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) => Err(alloc::format!("unexpected character '{}' at position {}", c as char, self.pos)),
        }
    }

    fn number(&mut self) -> Result<f64, String> {
        let start = self.pos;
        while self.src.get(self.pos).is_some_and(|c| c.is_ascii_digit() || *c == b'.') {
            self.pos += 1;
        }
        let text = core::str::from_utf8(&self.src[start..self.pos]).expect("ascii digits");
        text.parse::<f64>().map_err(|_| alloc::format!("invalid number '{text}' at position {start}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        assert_eq!(calculator("2+2"), "4");
        assert_eq!(calculator("(3*4)-5"), "7");
        assert_eq!(calculator(" 7 / 2 "), "3.5");
        assert_eq!(calculator("-(2+3)*2"), "-10");
        assert_eq!(calculator("2*3+4*5"), "26");
        assert_eq!(calculator("10-4-3"), "3");
    }

    #[test]
    fn errors_are_in_band() {
        assert_eq!(calculator("2+"), "ERROR: unexpected end of expression");
        assert_eq!(calculator("1/0"), "ERROR: division by zero");
        assert_eq!(calculator("(1+2"), "ERROR: unclosed '(' at position 0");
        assert_eq!(calculator("1+2)"), "ERROR: unbalanced ')' at position 3");
        assert_eq!(calculator("two"), "ERROR: unexpected character 't' at position 0");
        assert_eq!(calculator("1..2"), "ERROR: invalid number '1..2' at position 0");
    }

    #[test]
    fn registry_always_has_calculator() {
        let mut tools = ToolRegistry::new();
        assert_eq!(tools.call(CALCULATOR, "1+1").as_deref(), Some("2"));
        assert!(tools.call("search", "x").is_none());
        tools.register("echo", |s| s.to_string());
        assert_eq!(tools.call("echo", "hi").as_deref(), Some("hi"));
    }
}
