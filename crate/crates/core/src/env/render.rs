use super::{GameState, GridPos, TeamId};

/// Text rendering of a state, one glyph per cell inside a border.
///
/// `x`/`X` are Left players, `o`/`O` Right players (upper case marks the ball
/// holder), `:` is an empty goal cell and `.` an empty field cell. The side
/// border shows `#` along the goal rows.
pub fn render_ascii(state: &GameState) -> String {
    let pitch = state.pitch();
    let (h, w) = (pitch.height(), pitch.width());
    let n = pitch.players();
    let mut out = String::with_capacity((h + 2) * (w + 3));
    let horizontal = format!("+{}+\n", "-".repeat(w));
    out.push_str(&horizontal);
    for row in 0..h as i32 {
        let side = if pitch.is_goal_row(row) { '#' } else { '|' };
        out.push(side);
        for col in 0..w as i32 {
            let cell = GridPos::new(row, col);
            let glyph = match state.occupant(cell) {
                Some(slot) => {
                    let team = if slot < n { TeamId::Left } else { TeamId::Right };
                    match (team, slot == state.ball_holder_slot()) {
                        (TeamId::Left, false) => 'x',
                        (TeamId::Left, true) => 'X',
                        (TeamId::Right, false) => 'o',
                        (TeamId::Right, true) => 'O',
                    }
                }
                None if pitch.goal_owner(cell).is_some() => ':',
                None => '.',
            };
            out.push(glyph);
        }
        out.push(side);
        out.push('\n');
    }
    out.push_str(&horizontal);
    out
}
