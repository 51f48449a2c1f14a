//! Prompt templates with `{name}` placeholders and `{#if name}...{/if}` blocks.
//!
//! A block is kept when its variable is set to something other than `""` or `"0"`.
//! `{{` and `}}` produce literal braces.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Text(String),
    Var(String),
    If(String, Vec<Node>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    name: String,
    nodes: Vec<Node>,
}

impl Template {
    pub fn parse(name: &str, source: &str) -> Result<Self> {
        let mut parser = Parser {
            name,
            chars: source.chars().collect(),
            pos: 0,
        };
        let nodes = parser.nodes(false)?;
        Ok(Self {
            name: name.to_string(),
            nodes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Every placeholder referenced by the template, including block conditions.
    pub fn placeholders(&self) -> Vec<String> {
        fn walk(nodes: &[Node], out: &mut Vec<String>) {
            for node in nodes {
                match node {
                    Node::Text(_) => {}
                    Node::Var(v) => out.push(v.clone()),
                    Node::If(v, body) => {
                        out.push(v.clone());
                        walk(body, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.nodes, &mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn render(&self, vars: &HashMap<&str, String>) -> Result<String> {
        let mut out = String::new();
        self.render_into(&self.nodes, vars, &mut out)?;
        Ok(tidy(&out))
    }

    fn render_into(&self, nodes: &[Node], vars: &HashMap<&str, String>, out: &mut String) -> Result<()> {
        for node in nodes {
            match node {
                Node::Text(t) => out.push_str(t),
                Node::Var(v) => out.push_str(self.lookup(vars, v)?),
                Node::If(v, body) => {
                    let value = self.lookup(vars, v)?;
                    if !value.is_empty() && value != "0" {
                        self.render_into(body, vars, out)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn lookup<'a>(&self, vars: &'a HashMap<&str, String>, name: &str) -> Result<&'a str> {
        vars.get(name)
            .map(String::as_str)
            .ok_or_else(|| Error::Config(format!("template {}: no value for {{{name}}}", self.name)))
    }
}

// Collapses runs of 3+ newlines left behind by dropped blocks and trims the ends.
fn tidy(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut newlines = 0;
    for c in text.trim().chars() {
        if c == '\n' {
            newlines += 1;
            if newlines > 2 {
                continue;
            }
        } else {
            newlines = 0;
        }
        out.push(c);
    }
    out
}

struct Parser<'a> {
    name: &'a str,
    chars: Vec<char>,
    pos: usize,
}

impl Parser<'_> {
    fn err(&self, msg: &str) -> Error {
        Error::Config(format!("template {}: {msg} at offset {}", self.name, self.pos))
    }

    fn nodes(&mut self, in_block: bool) -> Result<Vec<Node>> {
        let mut nodes = Vec::new();
        let mut text = String::new();
        while self.pos < self.chars.len() {
            let c = self.chars[self.pos];
            let next = self.chars.get(self.pos + 1).copied();
            match (c, next) {
                ('{', Some('{')) | ('}', Some('}')) => {
                    text.push(c);
                    self.pos += 2;
                }
                ('{', _) => {
                    let close = self.chars[self.pos..]
                        .iter()
                        .position(|&ch| ch == '}')
                        .ok_or_else(|| self.err("unclosed placeholder"))?;
                    let tag: String = self.chars[self.pos + 1..self.pos + close].iter().collect();
                    self.pos += close + 1;
                    if !text.is_empty() {
                        nodes.push(Node::Text(std::mem::take(&mut text)));
                    }
                    let tag = tag.trim();
                    if let Some(cond) = tag.strip_prefix("#if ") {
                        let body = self.nodes(true)?;
                        nodes.push(Node::If(cond.trim().to_string(), body));
                    } else if tag == "/if" {
                        if !in_block {
                            return Err(self.err("unmatched {/if}"));
                        }
                        return Ok(nodes);
                    } else if is_identifier(tag) {
                        nodes.push(Node::Var(tag.to_string()));
                    } else {
                        return Err(self.err(&format!("bad placeholder {{{tag}}}")));
                    }
                }
                _ => {
                    text.push(c);
                    self.pos += 1;
                }
            }
        }
        if in_block {
            return Err(self.err("missing {/if}"));
        }
        if !text.is_empty() {
            nodes.push(Node::Text(text));
        }
        Ok(nodes)
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// The full set of prompts used by the chat teacher.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    pub weakness: Template,
    pub generate: Template,
    pub generate_merged: Template,
    pub label: Template,
    pub relabel: Template,
    pub repair: Template,
    pub rephrase: Template,
}

const FILES: [(&str, &str); 7] = [
    ("weakness.txt", include_str!("../../prompts/weakness.txt")),
    ("generate.txt", include_str!("../../prompts/generate.txt")),
    ("generate_merged.txt", include_str!("../../prompts/generate_merged.txt")),
    ("label.txt", include_str!("../../prompts/label.txt")),
    ("relabel.txt", include_str!("../../prompts/relabel.txt")),
    ("repair.txt", include_str!("../../prompts/repair.txt")),
    ("rephrase.txt", include_str!("../../prompts/rephrase.txt")),
];

impl PromptTemplates {
    pub fn builtin() -> Self {
        Self::from_sources(|_, default| Ok(default.to_string())).expect("built-in templates parse")
    }

    /// Loads templates from `dir`; files missing from the directory fall back to the built-ins.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if !dir.is_dir() {
            return Err(Error::Config(format!("prompt directory {} not found", dir.display())));
        }
        Self::from_sources(|file, default| {
            let path = dir.join(file);
            if path.exists() {
                Ok(std::fs::read_to_string(path)?)
            } else {
                Ok(default.to_string())
            }
        })
    }

    /// Writes the built-in templates into `dir` for editing.
    pub fn write_builtin(dir: impl AsRef<Path>) -> Result<()> {
        std::fs::create_dir_all(dir.as_ref())?;
        for (file, source) in FILES {
            std::fs::write(dir.as_ref().join(file), source)?;
        }
        Ok(())
    }

    fn from_sources(mut read: impl FnMut(&str, &str) -> Result<String>) -> Result<Self> {
        let mut parsed = Vec::with_capacity(FILES.len());
        for (file, default) in FILES {
            parsed.push(Template::parse(file, &read(file, default)?)?);
        }
        let mut it = parsed.into_iter();
        let mut next = || it.next().expect("seven templates");
        Ok(Self {
            weakness: next(),
            generate: next(),
            generate_merged: next(),
            label: next(),
            relabel: next(),
            repair: next(),
            rephrase: next(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&'static str, &str)]) -> HashMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_and_escapes() {
        let t = Template::parse("t", "Hello {name}, {{literal}}").unwrap();
        assert_eq!(t.render(&vars(&[("name", "world")])).unwrap(), "Hello world, {literal}");
    }

    #[test]
    fn conditional_blocks() {
        let t = Template::parse("t", "A\n{#if extra}B {extra}\n{/if}C").unwrap();
        assert_eq!(t.render(&vars(&[("extra", "x")])).unwrap(), "A\nB x\nC");
        assert_eq!(t.render(&vars(&[("extra", "")])).unwrap(), "A\nC");
        assert_eq!(t.render(&vars(&[("extra", "0")])).unwrap(), "A\nC");
    }

    #[test]
    fn missing_value_is_error() {
        let t = Template::parse("t", "{a}").unwrap();
        assert!(t.render(&HashMap::new()).is_err());
    }

    #[test]
    fn malformed_templates_rejected() {
        assert!(Template::parse("t", "{unclosed").is_err());
        assert!(Template::parse("t", "{#if a}no end").is_err());
        assert!(Template::parse("t", "{/if}").is_err());
        assert!(Template::parse("t", "{bad name}").is_err());
    }

    #[test]
    fn builtins_use_documented_placeholders() {
        let p = PromptTemplates::builtin();
        let w = p.weakness.placeholders();
        for name in ["task_description", "wrong_samples", "correct_samples", "labels"] {
            assert!(w.contains(&name.to_string()), "weakness lacks {name}");
        }
        let g = p.generate.placeholders();
        for name in ["pattern", "n_easy", "n_hard"] {
            assert!(g.contains(&name.to_string()), "generate lacks {name}");
        }
        assert!(p.label.placeholders().contains(&"texts".to_string()));
        assert!(!p.label.placeholders().contains(&"pattern".to_string()));
    }

    #[test]
    fn load_dir_overrides_single_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("label.txt"), "Label these: {texts}").unwrap();
        let p = PromptTemplates::load_dir(dir.path()).unwrap();
        assert_eq!(p.label.render(&vars(&[("texts", "1. x")])).unwrap(), "Label these: 1. x");
        assert_eq!(p.weakness, PromptTemplates::builtin().weakness);
    }
}
