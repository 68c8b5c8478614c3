//! NoGo rules on an N×N board (2 ≤ N ≤ 9).
//!
//! Capturing and suicide are both illegal, there are no passes, and the
//! player with no legal placement loses. Boards are stored as a pair of
//! bitboards so that group and liberty queries are a handful of shifts.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MIN_SIZE: usize = 1;
pub const MAX_SIZE: usize = 9;
pub const DEFAULT_SIZE: usize = 5;

type Bits = u128;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Player {
    Black,
    White,
}

impl Player {
    pub fn opponent(self) -> Player {
        match self {
            Player::Black => Player::White,
            Player::White => Player::Black,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Player::Black => 0,
            Player::White => 1,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Player::Black => "black",
            Player::White => "white",
        })
    }
}

impl FromStr for Player {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "b" | "black" => Ok(Player::Black),
            "w" | "white" => Ok(Player::White),
            _ => Err(Error::Parse(format!("unknown color `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cell {
    Empty,
    Stone(Player),
}

/// A board coordinate. Row 0 is printed as rank `1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Move {
    pub row: u8,
    pub col: u8,
}

impl Move {
    pub fn new(row: usize, col: usize) -> Self {
        Move { row: row as u8, col: col as u8 }
    }

    /// Flat action index `row * size + col`.
    pub fn index(self, size: usize) -> usize {
        self.row as usize * size + self.col as usize
    }

    pub fn from_index(index: usize, size: usize) -> Self {
        Move::new(index / size, index % size)
    }

    /// Vertex text such as `c2`. Column letters skip `i` as GTP does.
    pub fn to_vertex(self) -> String {
        format!("{}{}", column_letter(self.col as usize), self.row as usize + 1)
    }

    /// Parses vertex text against a board size; case-insensitive.
    pub fn parse_vertex(text: &str, size: usize) -> Result<Move> {
        let text = text.trim().to_ascii_lowercase();
        let mut chars = text.chars();
        let letter = chars.next().ok_or_else(|| Error::Parse("empty vertex".into()))?;
        let col = column_from_letter(letter)
            .ok_or_else(|| Error::Parse(format!("bad column in `{text}`")))?;
        let row: usize = chars
            .as_str()
            .parse()
            .map_err(|_| Error::Parse(format!("bad row in `{text}`")))?;
        if row == 0 || row > size || col >= size {
            return Err(Error::Parse(format!("vertex `{text}` is off a {size}x{size} board")));
        }
        Ok(Move::new(row - 1, col))
    }
}

impl fmt::Display for Move {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_vertex())
    }
}

fn column_letter(col: usize) -> char {
    let c = if col >= 8 { col + 1 } else { col };
    (b'a' + c as u8) as char
}

fn column_from_letter(letter: char) -> Option<usize> {
    if !letter.is_ascii_lowercase() || letter == 'i' {
        return None;
    }
    let c = (letter as u8 - b'a') as usize;
    Some(if c > 8 { c - 1 } else { c })
}

/// Shift masks for one board size.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    size: usize,
    board: Bits,
    not_first_col: Bits,
    not_last_col: Bits,
}

impl Geometry {
    fn new(size: usize) -> Self {
        let cells = size * size;
        let board: Bits = if cells == 128 { !0 } else { (1u128 << cells) - 1 };
        let mut first = 0;
        let mut last = 0;
        for r in 0..size {
            first |= 1u128 << (r * size);
            last |= 1u128 << (r * size + size - 1);
        }
        Geometry { size, board, not_first_col: board & !first, not_last_col: board & !last }
    }

    #[inline]
    fn neighbors(&self, b: Bits) -> Bits {
        let s = self.size;
        (((b << 1) & self.not_first_col)
            | ((b >> 1) & self.not_last_col)
            | (b << s)
            | (b >> s))
            & self.board
    }

    /// Closure of `seed` over orthogonally connected cells of `stones`.
    #[inline]
    fn flood(&self, seed: Bits, stones: Bits) -> Bits {
        let mut group = seed & stones;
        loop {
            let grown = (group | self.neighbors(group)) & stones;
            if grown == group {
                return group;
            }
            group = grown;
        }
    }
}

mod zobrist {
    use super::MAX_SIZE;
    use std::sync::OnceLock;

    pub struct Keys {
        pub stones: [[u64; MAX_SIZE * MAX_SIZE]; 2],
        pub white_to_move: u64,
    }

    fn splitmix(state: &mut u64) -> u64 {
        *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = *state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn keys() -> &'static Keys {
        static KEYS: OnceLock<Keys> = OnceLock::new();
        KEYS.get_or_init(|| {
            let mut state = 0x4E6F_476F_5A6F_6272;
            let mut stones = [[0u64; MAX_SIZE * MAX_SIZE]; 2];
            for color in stones.iter_mut() {
                for key in color.iter_mut() {
                    *key = splitmix(&mut state);
                }
            }
            Keys { stones, white_to_move: splitmix(&mut state) }
        })
    }
}

/// An immutable NoGo position.
#[derive(Clone, Copy)]
pub struct GameState {
    geom: Geometry,
    stones: [Bits; 2],
    to_move: Player,
    ply: u16,
    hash: u64,
}

impl PartialEq for GameState {
    fn eq(&self, other: &Self) -> bool {
        self.geom.size == other.geom.size
            && self.stones == other.stones
            && self.to_move == other.to_move
    }
}

impl Eq for GameState {}

impl fmt::Debug for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "GameState(size={}, to_move={}, ply={})", self.size(), self.to_move, self.ply)?;
        write!(f, "{}", self)
    }
}

impl fmt::Display for GameState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let size = self.size();
        for row in (0..size).rev() {
            write!(f, "{:>2} ", row + 1)?;
            for col in 0..size {
                let ch = match self.cell(Move::new(row, col)) {
                    Cell::Empty => '.',
                    Cell::Stone(Player::Black) => 'X',
                    Cell::Stone(Player::White) => 'O',
                };
                write!(f, "{ch} ")?;
            }
            writeln!(f)?;
        }
        write!(f, "   ")?;
        for col in 0..size {
            write!(f, "{} ", column_letter(col))?;
        }
        writeln!(f)
    }
}

impl GameState {
    /// Empty board with Black to move.
    pub fn new(size: usize) -> Result<Self> {
        if !(MIN_SIZE..=MAX_SIZE).contains(&size) {
            return Err(Error::Config(format!("board size {size} outside {MIN_SIZE}..={MAX_SIZE}")));
        }
        Ok(GameState {
            geom: Geometry::new(size),
            stones: [0, 0],
            to_move: Player::Black,
            ply: 0,
            hash: 0,
        })
    }

    /// Builds a position from explicit stones. The result is validated:
    /// every group needs a liberty, and `to_move` must not contradict the
    /// stone counts.
    pub fn from_stones(size: usize, black: &[Move], white: &[Move], to_move: Player) -> Result<Self> {
        let mut state = GameState::new(size)?;
        for (player, list) in [(Player::Black, black), (Player::White, white)] {
            for &m in list {
                if m.row as usize >= size || m.col as usize >= size {
                    return Err(Error::Parse(format!("{m} is off the board")));
                }
                if state.cell(m) != Cell::Empty {
                    return Err(Error::IllegalMove(format!("{m} placed twice")));
                }
                let bit = 1u128 << m.index(size);
                state.stones[player.index()] |= bit;
                state.hash ^= zobrist::keys().stones[player.index()][m.index(size)];
            }
        }
        state.ply = (black.len() + white.len()) as u16;
        if to_move == Player::White {
            state.hash ^= zobrist::keys().white_to_move;
        }
        state.to_move = to_move;
        if !state.all_groups_have_liberties() {
            return Err(Error::IllegalMove("position contains a group without liberties".into()));
        }
        Ok(state)
    }

    pub fn size(&self) -> usize {
        self.geom.size
    }

    pub fn num_cells(&self) -> usize {
        self.geom.size * self.geom.size
    }

    pub fn to_move(&self) -> Player {
        self.to_move
    }

    pub fn ply(&self) -> usize {
        self.ply as usize
    }

    pub fn cell(&self, m: Move) -> Cell {
        let bit = 1u128 << m.index(self.size());
        if self.stones[0] & bit != 0 {
            Cell::Stone(Player::Black)
        } else if self.stones[1] & bit != 0 {
            Cell::Stone(Player::White)
        } else {
            Cell::Empty
        }
    }

    /// Bitboard of `player`'s stones, bit `row * size + col`.
    pub fn stones(&self, player: Player) -> u128 {
        self.stones[player.index()]
    }

    fn empty(&self) -> Bits {
        self.geom.board & !(self.stones[0] | self.stones[1])
    }

    /// Whether `to_move` may place at flat index `idx`.
    fn is_legal_index(&self, idx: usize) -> bool {
        let bit = 1u128 << idx;
        let empty = self.empty();
        if empty & bit == 0 {
            return false;
        }
        let me = self.to_move.index();
        let own = self.stones[me] | bit;
        let opp = self.stones[1 - me];
        let empty_after = empty & !bit;

        let group = self.geom.flood(bit, own);
        if self.geom.neighbors(group) & empty_after == 0 {
            return false;
        }
        let mut adjacent_opp = self.geom.neighbors(bit) & opp;
        while adjacent_opp != 0 {
            let seed = adjacent_opp & adjacent_opp.wrapping_neg();
            let group = self.geom.flood(seed, opp);
            if self.geom.neighbors(group) & empty_after == 0 {
                return false;
            }
            adjacent_opp &= !group;
        }
        true
    }

    pub fn is_legal(&self, m: Move) -> bool {
        let size = self.size();
        (m.row as usize) < size && (m.col as usize) < size && self.is_legal_index(m.index(size))
    }

    /// Legal placements for the side to move, in ascending action index.
    pub fn legal_moves(&self) -> Vec<Move> {
        let size = self.size();
        self.legal_indices().into_iter().map(|i| Move::from_index(i, size)).collect()
    }

    pub fn legal_indices(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut empty = self.empty();
        while empty != 0 {
            let idx = empty.trailing_zeros() as usize;
            empty &= empty - 1;
            if self.is_legal_index(idx) {
                out.push(idx);
            }
        }
        out
    }

    /// Legal-move indicator per cell.
    pub fn legal_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.num_cells()];
        for i in self.legal_indices() {
            mask[i] = true;
        }
        mask
    }

    pub fn has_legal_move(&self) -> bool {
        let mut empty = self.empty();
        while empty != 0 {
            let idx = empty.trailing_zeros() as usize;
            empty &= empty - 1;
            if self.is_legal_index(idx) {
                return true;
            }
        }
        false
    }

    pub fn play(&self, m: Move) -> Result<GameState> {
        if !self.is_legal(m) {
            return Err(Error::IllegalMove(format!("{m} for {}", self.to_move)));
        }
        Ok(self.play_unchecked(m.index(self.size())))
    }

    /// Applies a move index already known to be legal.
    pub fn play_index(&self, idx: usize) -> Result<GameState> {
        if idx >= self.num_cells() || !self.is_legal_index(idx) {
            return Err(Error::IllegalMove(format!("action {idx} for {}", self.to_move)));
        }
        Ok(self.play_unchecked(idx))
    }

    fn play_unchecked(&self, idx: usize) -> GameState {
        let keys = zobrist::keys();
        let me = self.to_move.index();
        let mut next = *self;
        next.stones[me] |= 1u128 << idx;
        next.hash ^= keys.stones[me][idx] ^ keys.white_to_move;
        next.to_move = self.to_move.opponent();
        next.ply += 1;
        debug_assert!(next.all_groups_have_liberties());
        next
    }

    pub fn is_terminal(&self) -> bool {
        !self.has_legal_move()
    }

    /// The winner of a finished game: the side that still could move.
    pub fn winner(&self) -> Result<Player> {
        if self.is_terminal() {
            Ok(self.to_move.opponent())
        } else {
            Err(Error::NotTerminal)
        }
    }

    /// Zobrist hash: per-cell per-color keys XOR a side-to-move key.
    pub fn position_hash(&self) -> u64 {
        self.hash
    }

    /// Every group on the board has at least one liberty.
    pub fn all_groups_have_liberties(&self) -> bool {
        let empty = self.empty();
        for color in self.stones {
            let mut rest = color;
            while rest != 0 {
                let seed = rest & rest.wrapping_neg();
                let group = self.geom.flood(seed, color);
                if self.geom.neighbors(group) & empty == 0 {
                    return false;
                }
                rest &= !group;
            }
        }
        true
    }

    pub fn stone_count(&self) -> usize {
        (self.stones[0].count_ones() + self.stones[1].count_ones()) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::IndexedRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    /// Liberty count by explicit flood fill over a grid, independent of the
    /// bitboard code.
    fn grid_has_liberty(grid: &[Vec<i8>], row: usize, col: usize) -> bool {
        let n = grid.len();
        let color = grid[row][col];
        let mut seen = vec![vec![false; n]; n];
        let mut stack = vec![(row, col)];
        seen[row][col] = true;
        while let Some((r, c)) = stack.pop() {
            let mut nbrs = Vec::new();
            if r > 0 {
                nbrs.push((r - 1, c));
            }
            if r + 1 < n {
                nbrs.push((r + 1, c));
            }
            if c > 0 {
                nbrs.push((r, c - 1));
            }
            if c + 1 < n {
                nbrs.push((r, c + 1));
            }
            for (nr, nc) in nbrs {
                if grid[nr][nc] == 0 {
                    return true;
                }
                if grid[nr][nc] == color && !seen[nr][nc] {
                    seen[nr][nc] = true;
                    stack.push((nr, nc));
                }
            }
        }
        false
    }

    fn oracle_legal(state: &GameState) -> Vec<Move> {
        let n = state.size();
        let mut grid = vec![vec![0i8; n]; n];
        for r in 0..n {
            for c in 0..n {
                grid[r][c] = match state.cell(Move::new(r, c)) {
                    Cell::Empty => 0,
                    Cell::Stone(Player::Black) => 1,
                    Cell::Stone(Player::White) => 2,
                };
            }
        }
        let me = if state.to_move() == Player::Black { 1 } else { 2 };
        let mut out = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if grid[r][c] != 0 {
                    continue;
                }
                grid[r][c] = me;
                let mut ok = true;
                for rr in 0..n {
                    for cc in 0..n {
                        if grid[rr][cc] != 0 && !grid_has_liberty(&grid, rr, cc) {
                            ok = false;
                        }
                    }
                }
                grid[r][c] = 0;
                if ok {
                    out.push(Move::new(r, c));
                }
            }
        }
        out
    }

    fn random_position(size: usize, plies: usize, rng: &mut ChaCha8Rng) -> GameState {
        let mut s = GameState::new(size).unwrap();
        for _ in 0..plies {
            let moves = s.legal_moves();
            match moves.choose(rng) {
                Some(&m) => s = s.play(m).unwrap(),
                None => break,
            }
        }
        s
    }

    #[test]
    fn empty_two_by_two_all_legal() {
        let s = GameState::new(2).unwrap();
        assert_eq!(s.legal_moves().len(), 4);
    }

    #[test]
    fn single_point_board_is_terminal_and_white_wins() {
        let s = GameState::new(1).unwrap();
        assert!(s.legal_moves().is_empty());
        assert!(s.is_terminal());
        assert_eq!(s.winner().unwrap(), Player::White);
    }

    #[test]
    fn suicide_corner_excluded() {
        let s = GameState::from_stones(
            3,
            &[Move::new(2, 2)],
            &[Move::new(0, 1), Move::new(1, 0)],
            Player::Black,
        )
        .unwrap();
        let legal = s.legal_moves();
        assert!(!legal.contains(&Move::new(0, 0)));
        assert_eq!(legal, oracle_legal(&s));
        assert!(matches!(s.play(Move::new(0, 0)), Err(Error::IllegalMove(_))));
    }

    #[test]
    fn capture_is_forbidden() {
        // White a1 has one liberty at b1 once Black holds a2.
        let s = GameState::from_stones(3, &[Move::new(1, 0)], &[Move::new(0, 0)], Player::Black)
            .unwrap();
        assert!(!s.is_legal(Move::new(0, 1)));
        assert!(s.is_legal(Move::new(2, 2)));
    }

    #[test]
    fn play_flips_side_and_rejects_occupied() {
        let s = GameState::new(2).unwrap();
        let t = s.play(Move::new(0, 0)).unwrap();
        assert_eq!(t.to_move(), Player::White);
        assert_eq!(t.ply(), 1);
        assert_eq!(t.cell(Move::new(0, 0)), Cell::Stone(Player::Black));
        assert!(matches!(t.play(Move::new(0, 0)), Err(Error::IllegalMove(_))));
    }

    #[test]
    fn winner_on_live_position_errors() {
        let s = GameState::new(5).unwrap();
        assert!(!s.is_terminal());
        assert!(matches!(s.winner(), Err(Error::NotTerminal)));
    }

    #[test]
    fn random_playouts_reach_terminal_with_opponent_winning() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let s = random_position(5, 100, &mut rng);
            assert!(s.is_terminal());
            assert!(s.ply() <= 25);
            assert_eq!(s.winner().unwrap(), s.to_move().opponent());
            assert_eq!(s.ply(), s.stone_count());
        }
    }

    #[test]
    fn legal_moves_match_flood_fill_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for size in [2, 3, 4, 5, 7, 9] {
            for plies in 0..(size * size) {
                let s = random_position(size, plies, &mut rng);
                assert_eq!(s.legal_moves(), oracle_legal(&s), "{s:?}");
                assert!(s.all_groups_have_liberties());
            }
        }
    }

    #[test]
    fn legal_moves_equal_successful_plays() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for plies in 0..20 {
            let s = random_position(5, plies, &mut rng);
            let tried: Vec<Move> = (0..25)
                .map(|i| Move::from_index(i, 5))
                .filter(|&m| s.play(m).is_ok())
                .collect();
            assert_eq!(tried, s.legal_moves());
        }
    }

    #[test]
    fn hash_is_order_independent() {
        let s = GameState::new(5).unwrap();
        let a = s
            .play(Move::new(0, 0))
            .and_then(|s| s.play(Move::new(4, 4)))
            .and_then(|s| s.play(Move::new(2, 2)))
            .unwrap();
        let b = s
            .play(Move::new(2, 2))
            .and_then(|s| s.play(Move::new(4, 4)))
            .and_then(|s| s.play(Move::new(0, 0)))
            .unwrap();
        assert_eq!(a.position_hash(), b.position_hash());
        assert_eq!(a, b);
        assert_ne!(s.position_hash(), s.play(Move::new(0, 0)).unwrap().position_hash());
    }

    #[test]
    fn random_positions_hash_without_collisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut by_hash = std::collections::HashMap::new();
        let mut distinct = HashSet::new();
        for i in 0..10_000 {
            let s = random_position(5, i % 24, &mut rng);
            let key = (s.stones(Player::Black), s.stones(Player::White), s.to_move());
            distinct.insert(key);
            if let Some(prev) = by_hash.insert(s.position_hash(), key) {
                assert_eq!(prev, key, "hash collision");
            }
        }
        assert_eq!(by_hash.len(), distinct.len());
    }

    #[test]
    fn vertex_round_trip() {
        assert_eq!(Move::new(1, 2).to_vertex(), "c2");
        assert_eq!(Move::parse_vertex("C2", 5).unwrap(), Move::new(1, 2));
        assert_eq!(Move::new(0, 8).to_vertex(), "j1");
        assert_eq!(Move::parse_vertex("j9", 9).unwrap(), Move::new(8, 8));
        assert!(Move::parse_vertex("i1", 9).is_err());
        assert!(Move::parse_vertex("f1", 5).is_err());
        assert!(Move::parse_vertex("a0", 5).is_err());
    }

    proptest::proptest! {
        #[test]
        fn random_playouts_stay_legal(size in 2usize..=7, picks in proptest::collection::vec(0u32..1000, 49)) {
            let mut s = GameState::new(size).unwrap();
            let mut plies = 0;
            for p in picks {
                let legal = s.legal_indices();
                if legal.is_empty() {
                    break;
                }
                s = s.play_index(legal[p as usize % legal.len()]).unwrap();
                plies += 1;
                proptest::prop_assert!(s.all_groups_have_liberties());
                proptest::prop_assert_eq!(s.stone_count(), plies);
                proptest::prop_assert_eq!(s.ply(), plies);
            }
            proptest::prop_assert!(plies <= size * size);
            if s.is_terminal() {
                proptest::prop_assert_eq!(s.winner().unwrap(), s.to_move().opponent());
            }
        }
    }
}
