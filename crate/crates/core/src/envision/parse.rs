use crate::error::{Error, Result};

/// Extracts candidate labels from a raw LLM answer.
///
/// Bullet lines (`- item`, optionally indented) are taken in order, trimmed and stripped
/// of one pair of surrounding quotes. When the text has no bullet lines, the first JSON
/// array of strings found anywhere in it is used instead.
pub fn parse_response(raw: &str) -> Result<Vec<String>> {
    let bullets: Vec<String> = raw.lines().filter_map(bullet_payload).collect();
    if !bullets.is_empty() {
        return Ok(bullets);
    }
    let from_json = json_array(raw);
    if from_json.is_empty() {
        Err(Error::EmptyParse)
    } else {
        Ok(from_json)
    }
}

fn bullet_payload(line: &str) -> Option<String> {
    let rest = line.trim_start().strip_prefix('-')?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    clean(rest)
}

fn clean(item: &str) -> Option<String> {
    let item = strip_quotes(item.trim()).trim();
    (!item.is_empty()).then(|| item.to_owned())
}

fn strip_quotes(s: &str) -> &str {
    const PAIRS: [(char, char); 5] = [('"', '"'), ('\'', '\''), ('`', '`'), ('“', '”'), ('‘', '’')];
    for (open, close) in PAIRS {
        if let Some(inner) = s.strip_prefix(open).and_then(|r| r.strip_suffix(close)) {
            return inner;
        }
    }
    s
}

fn json_array(raw: &str) -> Vec<String> {
    for (start, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Vec<String>>();
        if let Some(Ok(items)) = stream.next() {
            let items: Vec<String> = items.iter().filter_map(|s| clean(s)).collect();
            if !items.is_empty() {
                return items;
            }
        }
    }
    Vec::new()
}

/// Inverse of [`parse_response`] for clean labels: one `- label` line each.
pub fn render_bullets<S: AsRef<str>>(labels: &[S]) -> String {
    labels
        .iter()
        .map(|l| format!("- {}\n", l.as_ref()))
        .collect()
}
