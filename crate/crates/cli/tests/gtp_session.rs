use std::io::Write;
use std::process::{Command, Stdio};

use dsmcts::game::{GameState, Move};

fn engine(args: &[&str], input: &str) -> String {
    let mut child = Command::new(env!("CARGO_BIN_EXE_dsmcts"))
        .args(["--seed", "5", "gtp", "--sims", "32"])
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn genmove_on_empty_board_is_legal() {
    let out = engine(&[], "protocol_version\nboardsize 5\nclear_board\ngenmove b\nquit\n");
    let replies: Vec<&str> = out.split("\n\n").collect();
    assert_eq!(&replies[..3], ["= 2", "=", "="]);
    let vertex = replies[3].strip_prefix("= ").unwrap();
    let m = Move::parse_vertex(vertex, 5).unwrap();
    assert!(GameState::new(5).unwrap().is_legal(m));
    assert_eq!(replies[4], "=");
}

#[test]
fn a_whole_game_stays_legal() {
    let mut script = String::from("boardsize 4\n");
    for i in 0..20 {
        script.push_str(if i % 2 == 0 { "genmove b\n" } else { "genmove w\n" });
    }
    let out = engine(&["--board-size", "4"], &script);
    let mut state = GameState::new(4).unwrap();
    let mut resigned = false;
    for reply in out.split("\n\n").skip(1).filter(|r| !r.is_empty()) {
        let v = reply.strip_prefix("= ").unwrap();
        if v == "resign" {
            assert!(!state.has_legal_move());
            resigned = true;
            break;
        }
        state = state.play(Move::parse_vertex(v, 4).unwrap()).unwrap();
    }
    assert!(resigned, "a 4x4 NoGo game ends within 20 moves");
}

#[test]
fn malformed_lines_get_error_replies() {
    let out = engine(&[], "frobnicate\nplay purple a1\nplay b a1\nplay w a1\n");
    assert_eq!(out, "? unknown command\n\n? syntax error\n\n=\n\n? illegal move\n\n");
}

#[test]
fn missing_network_is_a_data_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_dsmcts"))
        .args(["gtp", "--net", "/nonexistent/pv.net"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gtp"));
}
