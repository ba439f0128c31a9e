//! Flat `key = value` text: the format used by experiment configs and
//! checkpoint metadata. Lines starting with `#` and blank lines are ignored.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or(Error::Parse {
            line: i + 1,
            message: format!("expected key = value, got {line:?}"),
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

pub fn get<'a>(map: &'a BTreeMap<String, String>, key: &str) -> Result<&'a str> {
    map.get(key).map(|s| s.as_str()).ok_or_else(|| Error::Config(format!("missing key {key:?}")))
}

pub fn get_parsed<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = get(map, key)?;
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value for {key:?}: {raw:?}")))
}

pub fn get_list<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Vec<T>> {
    let raw = get(map, key)?;
    raw.split(',')
        .map(|tok| {
            tok.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid element in {key:?}: {tok:?}")))
        })
        .collect()
}

pub fn join_list<T: std::fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_access() {
        let map = parse("# comment\na = 1\nlist = 2, 3,4\nname = x\n\n").unwrap();
        assert_eq!(get_parsed::<usize>(&map, "a").unwrap(), 1);
        assert_eq!(get_list::<usize>(&map, "list").unwrap(), vec![2, 3, 4]);
        assert_eq!(get(&map, "name").unwrap(), "x");
        assert!(get(&map, "missing").is_err());
    }

    #[test]
    fn bad_line_is_parse_error() {
        assert!(matches!(parse("fine = 1\nbroken"), Err(Error::Parse { line: 2, .. })));
    }
}
