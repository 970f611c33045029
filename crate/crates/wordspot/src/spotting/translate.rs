//! Query translation: an offline TSV lexicon, with an optional plain-HTTP
//! fallback endpoint.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::zoneseg::Script;

/// Anything that can render a query word in a target script.
pub trait Translate {
    fn translate(&self, word: &str, source: Script, target: Script) -> Result<String>;
}

/// Exact-match lookup table, case-folded on the source word.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<(String, Script), String>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, target: Script, translation: &str) {
        self.entries
            .insert((word.to_lowercase(), target), translation.to_string());
    }

    /// Parse a UTF-8 TSV file with columns word, script, translation.
    pub fn from_tsv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(path.display().to_string(), e))?;
        let mut lex = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Manifest {
                    line: i + 1,
                    message: format!("expected 3 tab-separated columns, got {}", cols.len()),
                });
            }
            let script = Script::parse(cols[1]).map_err(|e| Error::Manifest {
                line: i + 1,
                message: e.to_string(),
            })?;
            lex.insert(cols[0], script, cols[2]);
        }
        Ok(lex)
    }

    pub fn to_tsv(&self) -> String {
        let mut rows: Vec<String> = self
            .entries
            .iter()
            .map(|((w, s), t)| format!("{w}\t{}\t{t}", s.name()))
            .collect();
        rows.sort();
        rows.join("\n") + "\n"
    }
}

impl Translate for Lexicon {
    fn translate(&self, word: &str, source: Script, target: Script) -> Result<String> {
        if word.is_empty() {
            return Err(Error::InvalidConfig("empty query word".into()));
        }
        if source == target {
            return Ok(word.to_string());
        }
        self.entries
            .get(&(word.to_lowercase(), target))
            .cloned()
            .ok_or_else(|| Error::NoTranslation {
                word: word.to_string(),
                script: target.name().to_string(),
            })
    }
}

/// Plain-HTTP translation endpoint, e.g. a local service. The request is
/// `GET {path}?word=W&script=S` against `host:port`; the response body is
/// the translation. 5-second timeout, no retries.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    host: String,
    port: u16,
    path: String,
}

impl HttpProvider {
    /// `endpoint` has the form `host:port/path` (no scheme).
    pub fn new(endpoint: &str) -> Result<Self> {
        let endpoint = endpoint.trim_start_matches("http://");
        let (authority, path) = match endpoint.find('/') {
            Some(i) => (&endpoint[..i], endpoint[i..].to_string()),
            None => (endpoint, "/".to_string()),
        };
        let (host, port) = match authority.rsplit_once(':') {
            Some((h, p)) => (
                h.to_string(),
                p.parse::<u16>()
                    .map_err(|_| Error::TranslationProvider(format!("bad port in '{endpoint}'")))?,
            ),
            None => (authority.to_string(), 80),
        };
        if host.is_empty() {
            return Err(Error::TranslationProvider(format!(
                "bad endpoint '{endpoint}'"
            )));
        }
        Ok(Self { host, port, path })
    }

    fn query(&self, word: &str, target: Script) -> Result<String> {
        let addr = format!("{}:{}", self.host, self.port);
        let err = |m: String| Error::TranslationProvider(m);
        let mut stream = TcpStream::connect(&addr).map_err(|e| err(format!("{addr}: {e}")))?;
        let timeout = Some(Duration::from_secs(5));
        stream.set_read_timeout(timeout).map_err(|e| err(e.to_string()))?;
        stream.set_write_timeout(timeout).map_err(|e| err(e.to_string()))?;
        let request = format!(
            "GET {}?word={}&script={} HTTP/1.0\r\nHost: {}\r\n\r\n",
            self.path,
            percent_encode(word),
            target.name(),
            self.host
        );
        stream
            .write_all(request.as_bytes())
            .map_err(|e| err(e.to_string()))?;
        let mut response = String::new();
        stream
            .read_to_string(&mut response)
            .map_err(|e| err(e.to_string()))?;
        let (head, body) = response
            .split_once("\r\n\r\n")
            .ok_or_else(|| err("malformed HTTP response".into()))?;
        let status = head
            .split_whitespace()
            .nth(1)
            .ok_or_else(|| err("missing status line".into()))?;
        if status != "200" {
            return Err(err(format!("endpoint returned status {status}")));
        }
        Ok(body.trim().to_string())
    }
}

impl Translate for HttpProvider {
    fn translate(&self, word: &str, source: Script, target: Script) -> Result<String> {
        if word.is_empty() {
            return Err(Error::InvalidConfig("empty query word".into()));
        }
        if source == target {
            return Ok(word.to_string());
        }
        self.query(word, target)
    }
}

/// Lexicon first, endpoint only on a miss.
pub struct ChainProvider {
    pub lexicon: Lexicon,
    pub fallback: Option<HttpProvider>,
}

impl Translate for ChainProvider {
    fn translate(&self, word: &str, source: Script, target: Script) -> Result<String> {
        match self.lexicon.translate(word, source, target) {
            Ok(t) => Ok(t),
            Err(Error::NoTranslation { .. }) if self.fallback.is_some() => {
                self.fallback.as_ref().unwrap().translate(word, source, target)
            }
            Err(e) => Err(e),
        }
    }
}

fn percent_encode(s: &str) -> String {
    let mut out = String::new();
    for b in s.as_bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'.' | b'_' | b'~' => {
                out.push(*b as char)
            }
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufRead;
    use std::net::TcpListener;

    #[test]
    fn lexicon_hits_misses_and_identity() {
        let mut lex = Lexicon::new();
        lex.insert("College", Script::Bangla, "কলেজে");
        let t = lex
            .translate("College", Script::English, Script::Bangla)
            .unwrap();
        assert_eq!(t, "কলেজে");
        // case folding on the source word
        let t = lex
            .translate("COLLEGE", Script::English, Script::Bangla)
            .unwrap();
        assert_eq!(t, "কলেজে");
        // identity passthrough when the word is already in the target script
        let t = lex
            .translate("College", Script::English, Script::English)
            .unwrap();
        assert_eq!(t, "College");
        assert!(matches!(
            lex.translate("Xyzzy", Script::English, Script::Devanagari),
            Err(Error::NoTranslation { .. })
        ));
    }

    #[test]
    fn tsv_round_trip() {
        let mut lex = Lexicon::new();
        lex.insert("College", Script::Bangla, "কলেজে");
        lex.insert("Station", Script::Devanagari, "स्टेशन");
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lexicon.tsv");
        std::fs::write(&path, lex.to_tsv()).unwrap();
        let loaded = Lexicon::from_tsv(&path).unwrap();
        assert_eq!(
            loaded
                .translate("college", Script::English, Script::Bangla)
                .unwrap(),
            "কলেজে"
        );

        std::fs::write(&path, "only\ttwo\n").unwrap();
        assert!(matches!(
            Lexicon::from_tsv(&path),
            Err(Error::Manifest { line: 1, .. })
        ));
    }

    #[test]
    fn http_provider_round_trip_and_failure() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            for _ in 0..2 {
                let (mut conn, _) = listener.accept().unwrap();
                let mut reader = std::io::BufReader::new(conn.try_clone().unwrap());
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let response = if line.contains("word=College") {
                    "HTTP/1.0 200 OK\r\nContent-Type: text/plain\r\n\r\nKOLEJ"
                } else {
                    "HTTP/1.0 404 Not Found\r\n\r\n"
                };
                conn.write_all(response.as_bytes()).unwrap();
            }
        });

        let provider = HttpProvider::new(&format!("{addr}/translate")).unwrap();
        let t = provider
            .translate("College", Script::English, Script::Bangla)
            .unwrap();
        assert_eq!(t, "KOLEJ");
        let e = provider.translate("Missing", Script::English, Script::Bangla);
        match e {
            Err(Error::TranslationProvider(m)) => assert!(m.contains("404"), "{m}"),
            other => panic!("{other:?}"),
        }
        handle.join().unwrap();
    }

    #[test]
    fn chain_provider_prefers_the_lexicon() {
        let mut lex = Lexicon::new();
        lex.insert("College", Script::Bangla, "কলেজে");
        let chain = ChainProvider {
            lexicon: lex,
            fallback: None,
        };
        assert_eq!(
            chain
                .translate("College", Script::English, Script::Bangla)
                .unwrap(),
            "কলেজে"
        );
        assert!(chain
            .translate("Missing", Script::English, Script::Bangla)
            .is_err());
    }

    #[test]
    fn percent_encoding_nonascii() {
        assert_eq!(percent_encode("ab c"), "ab%20c");
        assert_eq!(percent_encode("é"), "%C3%A9");
    }
}
