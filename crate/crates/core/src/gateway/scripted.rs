use std::fs;
use std::path::Path;

use super::{Backend, ChatMessage, GatewayError, GenerationConfig};

/// Replays a fixed list of responses, one per call.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    responses: Vec<String>,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn new(responses: Vec<String>) -> Self {
        Self { responses, cursor: 0 }
    }

    /// Reads `000.txt`, `001.txt`, ... in numeric order. Other files are ignored.
    pub fn from_dir(dir: &Path) -> Result<Self, GatewayError> {
        let io = |e: std::io::Error| GatewayError::Io(format!("{}: {e}", dir.display()));
        let mut numbered = Vec::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            let Some(stem) = name.strip_suffix(".txt") else {
                continue;
            };
            if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
                continue;
            }
            let index: u64 = stem
                .parse()
                .map_err(|_| GatewayError::Io(format!("bad script index {name}")))?;
            numbered.push((index, path));
        }
        numbered.sort();
        let responses = numbered
            .into_iter()
            .map(|(_, p)| fs::read_to_string(&p).map_err(io))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::new(responses))
    }

    pub fn calls(&self) -> usize {
        self.cursor
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&mut self, _conversation: &[ChatMessage], _cfg: &GenerationConfig) -> Result<String, GatewayError> {
        let response = self
            .responses
            .get(self.cursor)
            .cloned()
            .ok_or(GatewayError::ScriptExhausted(self.responses.len()))?;
        self.cursor += 1;
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::generate;

    fn convo() -> Vec<ChatMessage> {
        vec![ChatMessage::system("s"), ChatMessage::user("u")]
    }

    #[test]
    fn replays_in_order_then_exhausts() {
        let mut b = ScriptedBackend::new(vec!["s1".into(), "s2".into()]);
        let cfg = GenerationConfig::default();
        assert_eq!(generate(&convo(), &cfg, &mut b).unwrap(), "s1");
        assert_eq!(generate(&convo(), &cfg, &mut b).unwrap(), "s2");
        assert_eq!(generate(&convo(), &cfg, &mut b), Err(GatewayError::ScriptExhausted(2)));
    }

    #[test]
    fn directory_order_is_numeric() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("010.txt"), "ten").unwrap();
        fs::write(dir.path().join("002.txt"), "two").unwrap();
        fs::write(dir.path().join("001.txt"), "one").unwrap();
        fs::write(dir.path().join("notes.md"), "ignored").unwrap();
        let mut b = ScriptedBackend::from_dir(dir.path()).unwrap();
        assert_eq!(b.len(), 3);
        let cfg = GenerationConfig::default();
        let got: Vec<String> = (0..3).map(|_| b.complete(&convo(), &cfg).unwrap()).collect();
        assert_eq!(got, ["one", "two", "ten"]);
    }
}
