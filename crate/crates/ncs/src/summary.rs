//! Flat `key = value` run summaries with a versioned header.

use std::fmt::Display;

pub const SUMMARY_HEADER: &str = "# ncs-summary v1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary {
    pub entries: Vec<(String, String)>,
}

impl Summary {
    pub fn new(command: &str) -> Self {
        let mut s = Summary::default();
        s.push("command", command);
        s
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) {
        let v = value.to_string().replace('\n', " ");
        self.entries.push((key.into(), v));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from(SUMMARY_HEADER);
        out.push('\n');
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Option<Summary> {
        let mut lines = text.lines();
        if lines.next()? != SUMMARY_HEADER {
            return None;
        }
        let mut s = Summary::default();
        for l in lines.filter(|l| !l.trim().is_empty()) {
            let (k, v) = l.split_once(" = ")?;
            s.entries.push((k.to_string(), v.to_string()));
        }
        Some(s)
    }
}
