//! Subset of the Go Text Protocol, enough for external clients to play.

use std::io::{BufRead, Write};

use dsmcts::game::{GameState, Move, Player};
use dsmcts::harness::Agent;
use dsmcts::seed::derive;

const COMMANDS: &[&str] =
    &["protocol_version", "name", "version", "known_command", "list_commands", "boardsize", "clear_board", "play", "genmove", "showboard", "quit"];

pub struct Engine<'a> {
    agent: &'a dyn Agent,
    state: GameState,
    seed: u64,
    moves: u64,
}

enum Reply {
    Ok(String),
    Err(String),
    Quit,
}

impl<'a> Engine<'a> {
    pub fn new(agent: &'a dyn Agent, size: usize, seed: u64) -> dsmcts::Result<Self> {
        Ok(Engine { agent, state: GameState::new(size)?, seed, moves: 0 })
    }

    /// Serves commands until `quit` or end of input.
    pub fn run<R: BufRead, W: Write>(&mut self, input: R, mut out: W) -> std::io::Result<()> {
        for line in input.lines() {
            let line = line?;
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut words = line.split_whitespace().peekable();
            let id = words.peek().filter(|w| w.chars().all(|c| c.is_ascii_digit())).map(|w| w.to_string());
            if id.is_some() {
                words.next();
            }
            let id = id.unwrap_or_default();
            let cmd = words.next().unwrap_or("");
            let args: Vec<&str> = words.collect();
            let reply = self.handle(cmd, &args);
            match reply {
                Reply::Ok(text) if text.is_empty() => write!(out, "={id}\n\n")?,
                Reply::Ok(text) => write!(out, "={id} {text}\n\n")?,
                Reply::Err(text) => write!(out, "?{id} {text}\n\n")?,
                Reply::Quit => {
                    write!(out, "={id}\n\n")?;
                    out.flush()?;
                    return Ok(());
                }
            }
            out.flush()?;
        }
        Ok(())
    }

    fn handle(&mut self, cmd: &str, args: &[&str]) -> Reply {
        match (cmd, args) {
            ("protocol_version", []) => Reply::Ok("2".into()),
            ("name", []) => Reply::Ok("dsmcts".into()),
            ("version", []) => Reply::Ok(env!("CARGO_PKG_VERSION").into()),
            ("known_command", [c]) => Reply::Ok(COMMANDS.contains(c).to_string()),
            ("list_commands", []) => Reply::Ok(COMMANDS.join("\n")),
            ("quit", []) => Reply::Quit,
            ("boardsize", [n]) => match n.parse::<usize>().map_err(|e| e.to_string()).and_then(|n| {
                GameState::new(n).map_err(|e| e.to_string())
            }) {
                Ok(s) => {
                    self.state = s;
                    Reply::Ok(String::new())
                }
                Err(_) => Reply::Err("unacceptable size".into()),
            },
            ("clear_board", []) => {
                self.state = GameState::new(self.state.size()).expect("current size is valid");
                Reply::Ok(String::new())
            }
            ("play", [color, vertex]) => match self.play(color, vertex) {
                Ok(()) => Reply::Ok(String::new()),
                Err(e) => Reply::Err(e),
            },
            ("genmove", [color]) => match self.genmove(color) {
                Ok(v) => Reply::Ok(v),
                Err(e) => Reply::Err(e),
            },
            ("showboard", []) => Reply::Ok(format!("\n{}", self.state)),
            (c, _) if COMMANDS.contains(&c) => Reply::Err("syntax error".into()),
            _ => Reply::Err("unknown command".into()),
        }
    }

    fn with_to_move(&mut self, color: &str) -> Result<(), String> {
        let player: Player = color.parse().map_err(|_| "syntax error".to_string())?;
        if player != self.state.to_move() {
            let size = self.state.size();
            let stones = |p| {
                let bits = self.state.stones(p);
                (0..size * size).filter(|i| bits >> i & 1 == 1).map(|i| Move::from_index(i, size)).collect::<Vec<_>>()
            };
            let (b, w) = (stones(Player::Black), stones(Player::White));
            self.state = GameState::from_stones(size, &b, &w, player).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    fn play(&mut self, color: &str, vertex: &str) -> Result<(), String> {
        let m = Move::parse_vertex(vertex, self.state.size()).map_err(|_| "illegal move".to_string())?;
        self.with_to_move(color)?;
        self.state = self.state.play(m).map_err(|_| "illegal move".to_string())?;
        Ok(())
    }

    fn genmove(&mut self, color: &str) -> Result<String, String> {
        self.with_to_move(color)?;
        if !self.state.has_legal_move() {
            return Ok("resign".into());
        }
        let seed = derive(self.seed, self.moves);
        self.moves += 1;
        let choice = self.agent.select(&self.state, seed).map_err(|e| e.to_string())?;
        let m = Move::from_index(choice.action, self.state.size());
        self.state = self.state.play(m).map_err(|e| e.to_string())?;
        Ok(m.to_vertex().to_ascii_uppercase())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use dsmcts::harness::RandomAgent;

    fn session(input: &str) -> String {
        let mut engine = Engine::new(&RandomAgent, 5, 3).unwrap();
        let mut out = Vec::new();
        engine.run(input.as_bytes(), &mut out).unwrap();
        String::from_utf8(out).unwrap()
    }

    #[test]
    fn replies_and_ids() {
        let out = session("1 protocol_version\nname\nfoo\n7 play b z9\nquit\nname\n");
        assert_eq!(out, "=1 2\n\n= dsmcts\n\n? unknown command\n\n?7 illegal move\n\n=\n\n");
    }

    #[test]
    fn play_then_genmove_alternates() {
        let out = session("boardsize 5\nclear_board\nplay b c3\ngenmove w\n");
        let reply = out.split("\n\n").nth(3).unwrap();
        let vertex = reply.strip_prefix("= ").unwrap();
        let m = Move::parse_vertex(vertex, 5).unwrap();
        assert_ne!(m, Move::new(2, 2));
    }

    #[test]
    fn occupied_point_is_illegal() {
        let out = session("play b a1\nplay w a1\n");
        assert!(out.ends_with("? illegal move\n\n"));
    }

    #[test]
    fn wrong_arity_is_a_syntax_error() {
        assert_eq!(session("genmove\n"), "? syntax error\n\n");
        assert_eq!(session("boardsize 99\n"), "? unacceptable size\n\n");
    }
}
