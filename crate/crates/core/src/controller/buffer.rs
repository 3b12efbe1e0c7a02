use super::mpc::ControlPacket;
use crate::base::Vec3;

/// Onboard store of the latest packet.
#[derive(Debug, Clone, PartialEq)]
pub struct PpcBuffer {
    pub packet: Option<ControlPacket>,
    /// Index of the next input to execute.
    pub cursor: usize,
    /// Velocity gain of the hover fallback.
    pub damping: f64,
    last_slot: Option<u64>,
}

impl Default for PpcBuffer {
    fn default() -> Self {
        Self::new(0.5)
    }
}

impl PpcBuffer {
    pub fn new(damping: f64) -> Self {
        Self {
            packet: None,
            cursor: 0,
            damping,
            last_slot: None,
        }
    }

    /// Input the buffer would apply at `slot` without a new packet.
    pub fn peek(&self, slot: u64) -> Option<Vec3> {
        let p = self.packet.as_ref()?;
        let j = slot.checked_sub(p.issue_slot)?;
        p.inputs.get(j as usize).copied()
    }

    pub fn remaining(&self) -> usize {
        self.packet.as_ref().map_or(0, |p| p.len() - self.cursor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferOutput {
    pub input: Vec3,
    /// Index executed within the packet, if any.
    pub index: Option<usize>,
    pub underrun: bool,
}

/// Input to apply at `slot`, consuming `delivered` if a packet arrived.
///
/// Stored inputs are addressed by `slot - issue_slot`, so a loss streak of
/// `j` slots executes `u_{k+j|k}`. Once the packet is exhausted the hover
/// fallback `-damping * velocity`, clamped to `u_max`, is applied and the
/// output is flagged as an underrun.
pub fn buffer_execute(
    buf: &mut PpcBuffer,
    slot: u64,
    delivered: Option<ControlPacket>,
    velocity: &Vec3,
    u_max: f64,
) -> BufferOutput {
    debug_assert!(buf.last_slot.is_none_or(|s| slot > s), "slots must increase");
    buf.last_slot = Some(slot);
    if let Some(p) = delivered {
        buf.packet = Some(p);
        buf.cursor = 0;
    }
    if let Some(p) = &buf.packet {
        if let Some(j) = slot.checked_sub(p.issue_slot).map(|j| j as usize) {
            if j < p.len() {
                buf.cursor = j + 1;
                return BufferOutput {
                    input: p.inputs[j],
                    index: Some(j),
                    underrun: false,
                };
            }
        }
        buf.cursor = p.len();
    }
    BufferOutput {
        input: (-buf.damping * velocity).map(|c| c.clamp(-u_max, u_max)),
        index: None,
        underrun: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(k: u64, n: usize) -> ControlPacket {
        ControlPacket {
            issue_slot: k,
            inputs: (0..n).map(|i| Vec3::new(i as f64, k as f64, 0.0)).collect(),
            predicted: Vec::new(),
        }
    }

    #[test]
    fn fresh_packets_execute_first_input() {
        let mut b = PpcBuffer::default();
        for k in 0..5 {
            let out = buffer_execute(&mut b, k, Some(packet(k, 3)), &Vec3::zeros(), 3.0);
            assert_eq!(out.index, Some(0));
            assert_eq!(out.input, Vec3::new(0.0, k as f64, 0.0));
        }
    }

    #[test]
    fn losses_walk_the_packet_then_fall_back() {
        let mut b = PpcBuffer::default();
        buffer_execute(&mut b, 10, Some(packet(10, 5)), &Vec3::zeros(), 3.0);
        for j in 1..=3 {
            let out = buffer_execute(&mut b, 10 + j, None, &Vec3::zeros(), 3.0);
            assert_eq!(out.input.x, j as f64);
            assert!(!out.underrun);
        }
        assert_eq!(b.cursor, 4);
        assert!(!buffer_execute(&mut b, 14, None, &Vec3::zeros(), 3.0).underrun);
        let v = Vec3::new(10.0, -2.0, 0.0);
        let out = buffer_execute(&mut b, 15, None, &v, 3.0);
        assert!(out.underrun);
        assert_eq!(out.input, Vec3::new(-3.0, 1.0, 0.0));
        assert_eq!(b.cursor, 5);
    }

    #[test]
    fn empty_buffer_hovers() {
        let mut b = PpcBuffer::default();
        let out = buffer_execute(&mut b, 0, None, &Vec3::zeros(), 3.0);
        assert!(out.underrun);
        assert_eq!(out.input, Vec3::zeros());
    }
}
