//! Parsers for teacher replies.

use std::sync::LazyLock;

use regex::Regex;

static NUMBERED_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*\(?(\d+)[.):]\s*(.*)$").expect("valid regex"));
static INLINE_NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|\s)\(?(\d+)[.):]\s*").expect("valid regex"));
static MERGED_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[([^\]]+)\]\s*(.+)$").expect("valid regex"));

const RATIONALE_SEPARATOR: &str = " || ";

/// Items of a numbered list ("1. ...", "2) ..."), one per line. Unnumbered
/// lines continue the previous item. With no numbered line at all the reply
/// is split on blank lines instead.
pub fn parse_numbered_list(reply: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    let mut numbered = false;
    for line in reply.lines() {
        if let Some(caps) = NUMBERED_LINE.captures(line) {
            numbered = true;
            items.push(caps[2].trim().to_string());
        } else if numbered && !line.trim().is_empty() {
            if let Some(last) = items.last_mut() {
                if !last.is_empty() {
                    last.push(' ');
                }
                last.push_str(line.trim());
            }
        }
    }
    if !numbered {
        items = reply
            .split("\n\n")
            .map(|block| block.lines().map(str::trim).collect::<Vec<_>>().join(" "))
            .collect();
    }
    items
        .into_iter()
        .map(|item| strip_quotes(&item).to_string())
        .filter(|item| !item.is_empty())
        .collect()
}

/// Splits `"<text> || <reason>"`.
pub fn split_rationale(item: &str) -> (String, Option<String>) {
    match item.split_once(RATIONALE_SEPARATOR) {
        Some((text, why)) => {
            let why = why.trim();
            (
                strip_quotes(text).to_string(),
                (!why.is_empty()).then(|| why.to_string()),
            )
        }
        None => (strip_quotes(item).to_string(), None),
    }
}

/// Splits `"[<label>] <text>"`.
pub fn split_merged(item: &str) -> Option<(String, String)> {
    let caps = MERGED_ITEM.captures(item.trim())?;
    let (text, _) = split_rationale(&caps[2]);
    (!text.is_empty()).then(|| (caps[1].trim().to_string(), text))
}

/// Raw label answers for `n` numbered questions, positionally.
///
/// Accepts one answer per line or several inline ("1. a 2. b"). A reply
/// without numbering is read line by line, or as a whole when `n == 1`.
pub fn parse_label_list(reply: &str, n: usize) -> Vec<Option<String>> {
    let mut out = vec![None; n];
    let reply = reply.trim();
    let marks: Vec<(usize, usize, usize)> = INLINE_NUMBER
        .captures_iter(reply)
        .filter_map(|c| {
            let whole = c.get(0)?;
            let number = c[1].parse::<usize>().ok()?;
            Some((whole.start(), whole.end(), number))
        })
        .collect();
    if !marks.is_empty() {
        for (j, &(_, end, number)) in marks.iter().enumerate() {
            let stop = marks.get(j + 1).map_or(reply.len(), |m| m.0);
            let answer = clean_label(&reply[end..stop]);
            if (1..=n).contains(&number) && !answer.is_empty() && out[number - 1].is_none() {
                out[number - 1] = Some(answer);
            }
        }
        return out;
    }
    if n == 1 {
        let answer = clean_label(reply);
        if !answer.is_empty() {
            out[0] = Some(answer);
        }
        return out;
    }
    for (slot, line) in out
        .iter_mut()
        .zip(reply.lines().map(clean_label).filter(|l| !l.is_empty()))
    {
        *slot = Some(line);
    }
    out
}

/// Trims whitespace, quotes, trailing punctuation and a leading "label:".
pub fn clean_label(raw: &str) -> String {
    let mut s = raw.trim();
    if let Some(rest) = s
        .strip_prefix("Label:")
        .or_else(|| s.strip_prefix("label:"))
    {
        s = rest.trim();
    }
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '*' | '.' | ',' | ';' | '`'))
        .to_string()
}

fn strip_quotes(s: &str) -> &str {
    let s = s.trim();
    for (open, close) in [('"', '"'), ('“', '”'), ('\'', '\'')] {
        if s.len() >= 2 && s.starts_with(open) && s.ends_with(close) {
            return s[open.len_utf8()..s.len() - close.len_utf8()].trim();
        }
    }
    s
}
