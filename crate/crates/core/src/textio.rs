//! Helpers for the delimited text formats: a `# tag key=value ...` header
//! line followed by comma-separated rows.

use std::collections::BTreeMap;

/// Parses `# tag k1=v1 k2=v2` into its key/value pairs. Returns None when
/// the line is not a header with the expected tag.
pub(crate) fn kv_header(line: &str, tag: &str) -> Option<BTreeMap<String, String>> {
    let rest = line.strip_prefix('#')?.trim_start();
    let mut parts = rest.split_whitespace();
    if parts.next()? != tag {
        return None;
    }
    let mut out = BTreeMap::new();
    for p in parts {
        let (k, v) = p.split_once('=')?;
        out.insert(k.to_string(), v.to_string());
    }
    Some(out)
}

pub(crate) fn format_kv_header(tag: &str, pairs: &[(&str, String)]) -> String {
    let mut s = format!("# {tag}");
    for (k, v) in pairs {
        s.push_str(&format!(" {k}={v}"));
    }
    s
}
