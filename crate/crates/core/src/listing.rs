//! Extraction of JSON string lists from free-form completions.

use serde_json::Value;

/// The first JSON array in `raw` that parses, as a list of strings. Elements
/// may be bare strings or objects with a single string field such as
/// `{"claim": "..."}`.
pub(crate) fn first_string_list(raw: &str) -> Result<Vec<String>, String> {
    let mut first_error = None;
    for (at, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[at..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Array(items))) => return items.into_iter().map(as_text).collect(),
            Some(Ok(_)) => {}
            Some(Err(e)) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
            None => {}
        }
    }
    Err(first_error.unwrap_or_else(|| "no JSON list found".to_string()))
}

fn as_text(item: Value) -> Result<String, String> {
    match item {
        Value::String(s) => Ok(s),
        Value::Object(map) => {
            let mut strings = map.into_iter().filter_map(|(_, v)| match v {
                Value::String(s) => Some(s),
                _ => None,
            });
            match (strings.next(), strings.next()) {
                (Some(s), None) => Ok(s),
                _ => Err("list element object must hold exactly one string".to_string()),
            }
        }
        other => Err(format!("list element is not a string: {other}")),
    }
}
