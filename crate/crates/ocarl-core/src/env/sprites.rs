//! Fixed per-kind sprites.
//!
//! Every pixel channel is an integer number of 1/255 steps, so rendered
//! observations survive a round trip through 8-bit storage exactly, and two
//! cells holding the same kind produce bit-identical patches.

use alloc::vec;
use alloc::vec::Vec;

use super::Kind;

pub const FLOOR_RGB: [u8; 3] = [20, 20, 20];
pub const WALL_RGB: [u8; 3] = [110, 110, 110];
pub const HUNTER_RGB: [u8; 3] = [40, 90, 240];
pub const COW_RGB: [u8; 3] = [235, 235, 235];
pub const ZOMBIE_RGB: [u8; 3] = [30, 220, 60];

pub fn color(kind: Kind) -> [u8; 3] {
    match kind {
        Kind::Floor => FLOOR_RGB,
        Kind::Wall => WALL_RGB,
        Kind::Hunter => HUNTER_RGB,
        Kind::Cow => COW_RGB,
        Kind::Zombie => ZOMBIE_RGB,
    }
}

/// The `side x side` RGB sprite for a kind, row-major.
///
/// Walls and floors fill the cell; creatures are drawn as distinct shapes on
/// a floor-colored background so patches stay recognizable at a glance in
/// dumped frames.
pub fn sprite(kind: Kind, side: usize) -> Vec<[u8; 3]> {
    let fill = color(kind);
    match kind {
        Kind::Floor | Kind::Wall => vec![fill; side * side],
        _ => {
            let mut pixels = vec![FLOOR_RGB; side * side];
            if side < 4 {
                return vec![fill; side * side];
            }
            for y in 0..side {
                for x in 0..side {
                    if covers(kind, y, x, side) {
                        pixels[y * side + x] = fill;
                    }
                }
            }
            pixels
        }
    }
}

/// Shape mask for creature sprites, scaled to the cell side.
fn covers(kind: Kind, y: usize, x: usize, side: usize) -> bool {
    let margin = side / 8 + 1;
    let lo = margin;
    let hi = side - margin;
    match kind {
        // A solid square.
        Kind::Hunter => y >= lo && y < hi && x >= lo && x < hi,
        // A wide low body.
        Kind::Cow => y >= side / 4 && y < hi && x >= lo && x < hi,
        // A vertical trunk with a cross-arm near the top.
        Kind::Zombie => {
            let trunk = x >= 3 * side / 8 && x < side - 3 * side / 8 && y >= lo && y < hi;
            let arms = y >= side / 4 && y < side / 4 + margin && x >= lo && x < hi;
            trunk || arms
        }
        Kind::Floor | Kind::Wall => true,
    }
}
