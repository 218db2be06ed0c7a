//! Small helpers shared by the CSV and binary writers.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::Result;

/// Write `# key=value` lines ahead of a CSV body.
pub fn write_comment_header<W: Write>(w: &mut W, meta: &[(&str, String)]) -> Result<()> {
    for (k, v) in meta {
        writeln!(w, "# {k}={v}")?;
    }
    Ok(())
}

/// Parse the leading `# key=value` lines of a text file.
pub fn read_comment_header(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .take_while(|l| l.starts_with('#'))
        .filter_map(|l| {
            let body = l.trim_start_matches('#').trim();
            let (k, v) = body.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Write a CSV with an optional comment header from pre-formatted rows.
pub fn write_csv<W: Write>(
    mut w: W,
    meta: &[(&str, String)],
    columns: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    write_comment_header(&mut w, meta)?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(columns)?;
    for row in rows {
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Fixed-precision formatting for report columns.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip() {
        let mut buf = Vec::new();
        write_comment_header(&mut buf, &[("seed", "7".into()), ("config_hash", "ab12".into())]).unwrap();
        buf.extend_from_slice(b"t,value\n0,1\n# not header\n");
        let meta = read_comment_header(std::str::from_utf8(&buf).unwrap());
        assert_eq!(meta.len(), 2);
        assert_eq!(meta["seed"], "7");
        assert_eq!(meta["config_hash"], "ab12");
    }
}
