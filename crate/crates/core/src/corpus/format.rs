//! Line-delimited corpus records.
//!
//! One claim per line, ten tab-separated fields:
//!
//! ```text
//! topic  claim_id  parent_id  stance  text  no  low  medium  high  very_high
//! ```
//!
//! `parent_id` is empty for the thesis. Text fields escape `\\`, `\t`, `\n`
//! and `\r`. Blank lines and lines starting with `#` are ignored. Records
//! sharing a topic form one tree and may appear in any order.

use std::io::{BufRead, Write};

use groups::OrderedGroups;

use super::{ArgumentTree, ClaimNode, CorpusError, Result, Stance, VoteRecord};

const FIELDS: usize = 10;

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("unknown escape `\\{other}`")),
            None => return Err("dangling escape at end of field".into()),
        }
    }
    Ok(out)
}

fn parse_line(line: &str, lineno: usize) -> Result<(String, ClaimNode)> {
    let malformed = |reason: String| CorpusError::Malformed {
        line: lineno,
        reason,
    };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != FIELDS {
        return Err(malformed(format!(
            "expected {FIELDS} tab-separated fields, found {}",
            fields.len()
        )));
    }
    let topic = unescape_field(fields[0]).map_err(&malformed)?;
    let id = unescape_field(fields[1]).map_err(&malformed)?;
    if id.is_empty() {
        return Err(malformed("empty claim id".into()));
    }
    let parent = unescape_field(fields[2]).map_err(&malformed)?;
    let stance = Stance::parse(fields[3])
        .ok_or_else(|| malformed(format!("unknown stance `{}`", fields[3])))?;
    let text = unescape_field(fields[4]).map_err(&malformed)?;
    let mut counts = [0u32; 5];
    for (slot, raw) in counts.iter_mut().zip(&fields[5..]) {
        *slot = raw
            .trim()
            .parse()
            .map_err(|_| malformed(format!("vote count `{raw}` is not a non-negative integer")))?;
    }
    let node = ClaimNode {
        id,
        parent_id: (!parent.is_empty()).then_some(parent),
        stance,
        text,
        votes: VoteRecord::new(counts),
    };
    Ok((topic, node))
}

/// Parses a whole corpus. Trees are returned in order of first appearance.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<ArgumentTree>> {
    let mut groups: OrderedGroups<ClaimNode> = OrderedGroups::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (topic, node) = parse_line(line, i + 1)?;
        groups.push(topic, node);
    }
    groups
        .into_groups()
        .into_iter()
        .map(|(topic, nodes)| ArgumentTree::new(topic, nodes))
        .collect()
}

pub fn parse_corpus_str(text: &str) -> Result<Vec<ArgumentTree>> {
    parse_corpus(text.as_bytes())
}

/// Writes trees in the record format: thesis first, then claims breadth-first
/// with siblings in id order.
pub fn write_corpus<W: Write>(mut out: W, trees: &[ArgumentTree]) -> std::io::Result<()> {
    for tree in trees {
        let mut queue = std::collections::VecDeque::from([tree.thesis()]);
        while let Some(node) = queue.pop_front() {
            let v = node.votes.counts;
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                escape_field(tree.topic()),
                escape_field(&node.id),
                escape_field(node.parent_id.as_deref().unwrap_or("")),
                node.stance,
                escape_field(&node.text),
                v[0],
                v[1],
                v[2],
                v[3],
                v[4]
            )?;
            queue.extend(
                tree.claims()
                    .filter(|c| c.parent_id.as_deref() == Some(node.id.as_str())),
            );
        }
    }
    Ok(())
}

mod groups {
    use std::collections::HashMap;

    /// Groups values by key, remembering first-seen key order.
    pub struct OrderedGroups<T> {
        index: HashMap<String, usize>,
        groups: Vec<(String, Vec<T>)>,
    }

    impl<T> Default for OrderedGroups<T> {
        fn default() -> Self {
            Self {
                index: HashMap::new(),
                groups: Vec::new(),
            }
        }
    }

    impl<T> OrderedGroups<T> {
        pub fn push(&mut self, key: String, value: T) {
            match self.index.get(&key) {
                Some(&i) => self.groups[i].1.push(value),
                None => {
                    self.index.insert(key.clone(), self.groups.len());
                    self.groups.push((key, vec![value]));
                }
            }
        }

        pub fn into_groups(self) -> Vec<(String, Vec<T>)> {
            self.groups
        }
    }
}
