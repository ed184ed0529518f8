//! Address-event packets, bounded FIFO schedulers and the handshake channel
//! that links neighbouring cores.
//!
//! Wire format (9 bits): bit 8 is the control flag. Spike packets carry the
//! source neuron in bits 7..0. Control packets use fixed sentinels in the
//! low byte: 0 for end-of-time-step, 1 for end-of-input.

use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, Condvar, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONTROL_BIT: u16 = 1 << 8;
pub const EOTS_SENTINEL: u16 = 0;
pub const EOIN_SENTINEL: u16 = 1;

/// Default depth of each scheduler FIFO.
pub const DEFAULT_QUEUE_CAPACITY: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PacketKind {
    /// Spike from the previous layer.
    Aspl,
    /// Spike from the current layer, for recurrent integration.
    Ascl,
    /// End of time step.
    Eots,
    /// End of input sequence.
    Eoin,
}

impl PacketKind {
    pub fn is_terminator(self) -> bool {
        matches!(self, PacketKind::Eots | PacketKind::Eoin)
    }

    pub fn name(self) -> &'static str {
        match self {
            PacketKind::Aspl => "ASPL",
            PacketKind::Ascl => "ASCL",
            PacketKind::Eots => "EOTS",
            PacketKind::Eoin => "EOIN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AerPacket {
    pub kind: PacketKind,
    pub address: u8,
}

impl AerPacket {
    pub const EOTS: AerPacket = AerPacket { kind: PacketKind::Eots, address: EOTS_SENTINEL as u8 };
    pub const EOIN: AerPacket = AerPacket { kind: PacketKind::Eoin, address: EOIN_SENTINEL as u8 };

    pub fn aspl(address: u8) -> Self {
        Self { kind: PacketKind::Aspl, address }
    }

    pub fn ascl(address: u8) -> Self {
        Self { kind: PacketKind::Ascl, address }
    }

    /// Builds a spike packet from a wider index, rejecting addresses > 255.
    pub fn spike(kind: PacketKind, address: usize) -> Result<Self> {
        let address = u8::try_from(address)
            .map_err(|_| Error::Address(format!("spike address {address} exceeds 8 bits")))?;
        Ok(Self { kind, address })
    }
}

impl fmt::Display for AerPacket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.kind.name(), self.address)
    }
}

/// Which scheduler a data word is being decoded for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeContext {
    InterCore,
    Recurrent,
}

pub fn encode_packet(p: AerPacket) -> u16 {
    match p.kind {
        PacketKind::Aspl | PacketKind::Ascl => p.address as u16,
        PacketKind::Eots => CONTROL_BIT | EOTS_SENTINEL,
        PacketKind::Eoin => CONTROL_BIT | EOIN_SENTINEL,
    }
}

pub fn decode_packet(word: u16, context: DecodeContext) -> Result<AerPacket> {
    if word >= 512 {
        return Err(Error::Protocol(format!("packet word {word:#x} exceeds 9 bits")));
    }
    if word & CONTROL_BIT != 0 {
        return match word & 0xff {
            EOTS_SENTINEL => Ok(AerPacket::EOTS),
            EOIN_SENTINEL => Ok(AerPacket::EOIN),
            other => Err(Error::Protocol(format!("unknown control sentinel {other}"))),
        };
    }
    let address = (word & 0xff) as u8;
    Ok(match context {
        DecodeContext::InterCore => AerPacket::aspl(address),
        DecodeContext::Recurrent => AerPacket::ascl(address),
    })
}

/// Fixed-capacity FIFO. `push` hands the item back when full.
#[derive(Debug, Clone)]
pub struct BoundedQueue<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> BoundedQueue<T> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("queue capacity must be at least 1".into()));
        }
        Ok(Self { capacity, items: VecDeque::with_capacity(capacity) })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn push(&mut self, item: T) -> std::result::Result<(), T> {
        if self.is_full() {
            return Err(item);
        }
        self.items.push_back(item);
        Ok(())
    }

    pub fn pop(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    pub fn peek(&self) -> Option<&T> {
        self.items.front()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn drain(&mut self) -> impl Iterator<Item = T> + '_ {
        self.items.drain(..)
    }
}

/// Outcome of a non-blocking send.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrySend<T> {
    Accepted,
    /// Receiver queue full; retry later with the returned item.
    Full(T),
}

struct Shared<T> {
    queue: Mutex<ChannelState<T>>,
    changed: Condvar,
}

struct ChannelState<T> {
    queue: BoundedQueue<T>,
    sender_alive: bool,
    receiver_alive: bool,
}

/// Sending half of a handshake link.
pub struct AerSender<T> {
    shared: Arc<Shared<T>>,
}

/// Receiving half; owns the receiver's feedforward queue.
pub struct AerReceiver<T> {
    shared: Arc<Shared<T>>,
}

/// Creates a lossless handshake link whose receive queue holds `capacity`
/// items. Senders block (or are told to retry) while it is full.
pub fn handshake_channel<T>(capacity: usize) -> Result<(AerSender<T>, AerReceiver<T>)> {
    let shared = Arc::new(Shared {
        queue: Mutex::new(ChannelState {
            queue: BoundedQueue::new(capacity)?,
            sender_alive: true,
            receiver_alive: true,
        }),
        changed: Condvar::new(),
    });
    Ok((AerSender { shared: shared.clone() }, AerReceiver { shared }))
}

impl<T> AerSender<T> {
    /// Blocks until the receiver has room.
    pub fn send(&self, item: T) -> Result<()> {
        let mut st = self.shared.queue.lock().expect("channel lock poisoned");
        let mut item = item;
        loop {
            if !st.receiver_alive {
                return Err(Error::ChannelClosed { pending: st.queue.len() + 1 });
            }
            match st.queue.push(item) {
                Ok(()) => {
                    self.shared.changed.notify_all();
                    return Ok(());
                }
                Err(back) => {
                    item = back;
                    st = self.shared.changed.wait(st).expect("channel lock poisoned");
                }
            }
        }
    }

    pub fn try_send(&self, item: T) -> Result<TrySend<T>> {
        let mut st = self.shared.queue.lock().expect("channel lock poisoned");
        if !st.receiver_alive {
            return Err(Error::ChannelClosed { pending: st.queue.len() + 1 });
        }
        match st.queue.push(item) {
            Ok(()) => {
                self.shared.changed.notify_all();
                Ok(TrySend::Accepted)
            }
            Err(back) => Ok(TrySend::Full(back)),
        }
    }
}

impl<T> Drop for AerSender<T> {
    fn drop(&mut self) {
        if let Ok(mut st) = self.shared.queue.lock() {
            st.sender_alive = false;
            self.shared.changed.notify_all();
        }
    }
}

impl<T> AerReceiver<T> {
    /// Blocks for the next item. `None` once the sender is gone and the
    /// queue has drained.
    pub fn recv(&self) -> Option<T> {
        let mut st = self.shared.queue.lock().expect("channel lock poisoned");
        loop {
            if let Some(item) = st.queue.pop() {
                self.shared.changed.notify_all();
                return Some(item);
            }
            if !st.sender_alive {
                return None;
            }
            st = self.shared.changed.wait(st).expect("channel lock poisoned");
        }
    }

    pub fn try_recv(&self) -> Option<T> {
        let mut st = self.shared.queue.lock().expect("channel lock poisoned");
        let item = st.queue.pop();
        if item.is_some() {
            self.shared.changed.notify_all();
        }
        item
    }

    pub fn len(&self) -> usize {
        self.shared.queue.lock().expect("channel lock poisoned").queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shuts the link down. Fails if items were still queued.
    pub fn close(self) -> Result<()> {
        let pending = {
            let mut st = self.shared.queue.lock().expect("channel lock poisoned");
            st.receiver_alive = false;
            self.shared.changed.notify_all();
            st.queue.len()
        };
        if pending > 0 {
            Err(Error::ChannelClosed { pending })
        } else {
            Ok(())
        }
    }
}

impl<T> Drop for AerReceiver<T> {
    fn drop(&mut self) {
        if let Ok(mut st) = self.shared.queue.lock() {
            st.receiver_alive = false;
            self.shared.changed.notify_all();
        }
    }
}
