//! Per-switch state machine for the distributed update protocol.
//!
//! A switch learns its segments from one `InstallUpdate`, then coordinates
//! with its path neighbors: `GoodToMove` walks a segment's new subpath
//! backwards reserving capacity, and once the first switch diverts traffic,
//! `Removing` walks the old subpath forwards releasing it. Execution is
//! capacity-gated with a reservation rule that keeps lower-priority segments
//! from starving higher-priority ones, and a per-segment deadlock timer
//! escapes blocked states by moving a volume fraction onto the new path.
//!
//! Capacity accounting is per switch and conservative: a switch reserves its
//! outgoing link when it installs and releases an old link no earlier than
//! the moment traffic can no longer arrive over it.

use std::collections::BTreeMap;

use crate::depgraph::{Priority, SPLIT_QUANTUM};
use crate::error::SimError;
use crate::model::{LinkKey, SwitchId, VOL_EPS};
use crate::segmentation::SegmentId;
use crate::sim::{MsgBody, TraceAction};

/// Per-switch view of one segment, as shipped in `InstallUpdate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInfo {
    pub segment: SegmentId,
    pub priority: Priority,
    pub volume: f64,
    /// Neighbors on the segment's new subpath, when this switch is on it.
    pub prev_new: Option<SwitchId>,
    pub next_new: Option<SwitchId>,
    /// Neighbors on the segment's old subpath, when this switch is on it.
    pub prev_old: Option<SwitchId>,
    pub next_old: Option<SwitchId>,
    pub on_new: bool,
    pub on_old: bool,
    pub is_first_on_new: bool,
    pub is_last_on_new: bool,
    pub is_first_on_old: bool,
    pub is_last_on_old: bool,
    pub is_first_of_flow_old: bool,
    pub is_last_of_flow_old: bool,
    pub is_first_of_flow_new: bool,
    pub is_last_of_flow_new: bool,
    /// For an InLoop segment: the segment that must complete first.
    pub inloop_dep: Option<SegmentId>,
    /// InLoop segments whose `GoodToMove` chain this switch starts once the
    /// named segment has fully moved here.
    pub dep_triggers: Vec<SegmentId>,
}

/// Side effects a handler asks the simulation to perform.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Send { to: SwitchId, body: MsgBody },
    /// Completion acknowledgment for one segment.
    Ack { segment: SegmentId },
    /// (Re-)arm the deadlock timer for a parked segment.
    ArmTimer { segment: SegmentId, generation: u64 },
    Record {
        action: TraceAction,
        segment: Option<SegmentId>,
        link: Option<LinkKey>,
        volume: Option<f64>,
    },
    DeadlockReport { segment: SegmentId, splittable: bool },
}

#[derive(Debug, Clone, Copy)]
pub struct AgentConfig {
    pub split_enabled: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { split_enabled: true }
    }
}

/// Runtime bookkeeping for one segment at one switch. Volumes are cumulative
/// so that split fractions compose with full moves.
///
/// Installing replaces the forwarding entry (traffic diverts immediately),
/// but the reservation on the old outgoing link is released only when the
/// `Removing` wave arrives — except at the segment's first switch, which
/// originates that wave and releases at its own flip.
#[derive(Debug, Clone, Default)]
struct SegRuntime {
    /// Volume cleared by downstream `GoodToMove`.
    gtm_received: f64,
    /// Volume moved onto the new path at this switch.
    installed: f64,
    /// Reservation released on the old outgoing link at this switch.
    released: f64,
    /// Volume announced by upstream `Removing`.
    removing_received: f64,
    /// Removing volume already forwarded (or processed, at the last switch).
    removing_done: f64,
    parked: bool,
    timer_generation: u64,
    deadlock_reported: bool,
    dep_fired: bool,
    acked: bool,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub switch: SwitchId,
    config: AgentConfig,
    initialized: bool,
    /// Residual capacity per outgoing neighbor.
    residual: BTreeMap<SwitchId, f64>,
    capacity: BTreeMap<SwitchId, f64>,
    infos: BTreeMap<SegmentId, SegmentInfo>,
    rt: BTreeMap<SegmentId, SegRuntime>,
}

impl Agent {
    /// `capacity` and `residual` describe this switch's outgoing links under
    /// the current configuration; both are static switch knowledge.
    pub fn new(
        switch: SwitchId,
        capacity: BTreeMap<SwitchId, f64>,
        residual: BTreeMap<SwitchId, f64>,
        config: AgentConfig,
    ) -> Self {
        Agent {
            switch,
            config,
            initialized: false,
            residual,
            capacity,
            infos: BTreeMap::new(),
            rt: BTreeMap::new(),
        }
    }

    pub fn residual_of(&self, neighbor: SwitchId) -> f64 {
        self.residual.get(&neighbor).copied().unwrap_or(0.0)
    }

    /// Segments whose `GoodToMove` is parked awaiting capacity.
    pub fn pending_gtm(&self) -> Vec<SegmentId> {
        self.rt
            .iter()
            .filter(|(_, rt)| rt.parked)
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Segments with held `Removing` volume awaiting the local install.
    pub fn held_removing(&self) -> Vec<SegmentId> {
        self.infos
            .iter()
            .filter(|(id, info)| {
                let rt = &self.rt[id];
                info.next_new.is_some()
                    && rt.installed + VOL_EPS < info.volume
                    && rt.removing_received > rt.removing_done + VOL_EPS
            })
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Segments fully installed at this switch.
    pub fn installed_new(&self) -> Vec<SegmentId> {
        self.rt
            .iter()
            .filter(|(id, rt)| {
                self.infos[*id].next_new.is_some() && rt.installed + VOL_EPS >= self.infos[*id].volume
            })
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Segments whose old rule is fully released at this switch.
    pub fn removed_old(&self) -> Vec<SegmentId> {
        self.rt
            .iter()
            .filter(|(id, rt)| {
                self.infos[*id].next_old.is_some()
                    && rt.released + VOL_EPS >= self.infos[*id].volume
            })
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Volume currently moved onto the new path per segment (split state).
    pub fn split_fraction(&self, segment: &SegmentId) -> f64 {
        self.rt.get(segment).map_or(0.0, |rt| rt.installed)
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    fn info(&self, segment: &SegmentId) -> Result<&SegmentInfo, SimError> {
        self.infos.get(segment).ok_or_else(|| SimError::Protocol {
            actor: self.switch.to_string(),
            detail: format!("unknown segment {segment}"),
        })
    }

    /// First message of an update: stores segment infos, then starts the
    /// `GoodToMove` chain of every segment this switch terminates on the new
    /// path, and the `Removing` chain of every pure removal it heads.
    /// Duplicate delivery is a no-op.
    pub fn handle_install_update(&mut self, infos: Vec<SegmentInfo>) -> Vec<Effect> {
        let mut effects = Vec::new();
        if self.initialized {
            return effects;
        }
        self.initialized = true;
        for info in infos {
            self.rt.insert(info.segment.clone(), SegRuntime::default());
            self.infos.insert(info.segment.clone(), info);
        }
        let ids: Vec<SegmentId> = self.infos.keys().cloned().collect();
        for id in ids {
            let info = self.infos[&id].clone();
            if !info.on_new && info.on_old && info.is_first_on_old {
                // Pure removal: divert at the head immediately.
                let rt = self.rt.get_mut(&id).unwrap();
                rt.removing_received = info.volume;
                self.process_removal(&id, &mut effects);
            } else if info.on_new
                && info.is_last_on_new
                && info.inloop_dep.is_none()
            {
                effects.push(Effect::Send {
                    to: info.prev_new.expect("last switch has a predecessor"),
                    body: MsgBody::GoodToMove { segment: id.clone(), volume: info.volume },
                });
            }
        }
        effects
    }

    /// Downstream is ready for `volume` more units of `segment`; try to move
    /// them over this switch's outgoing link.
    pub fn handle_good_to_move(
        &mut self,
        segment: &SegmentId,
        volume: f64,
    ) -> Result<Vec<Effect>, SimError> {
        let info = self.info(segment)?.clone();
        if info.next_new.is_none() {
            return Err(SimError::Protocol {
                actor: self.switch.to_string(),
                detail: format!("GoodToMove for {segment} at a switch with no new-path successor"),
            });
        }
        let rt = self.rt.get_mut(segment).unwrap();
        rt.gtm_received = (rt.gtm_received + volume).min(info.volume);
        let mut effects = Vec::new();
        self.execute_ready(false, &mut effects);
        Ok(effects)
    }

    /// Upstream has diverted `volume` units off the old subpath.
    pub fn handle_removing(
        &mut self,
        segment: &SegmentId,
        volume: f64,
    ) -> Result<Vec<Effect>, SimError> {
        let info = self.info(segment)?.clone();
        let rt = self.rt.get_mut(segment).unwrap();
        rt.removing_received = (rt.removing_received + volume).min(info.volume);
        let mut effects = Vec::new();
        self.process_removal(segment, &mut effects);
        self.execute_ready(true, &mut effects);
        Ok(effects)
    }

    /// Deadlock timer fired for a parked segment.
    pub fn handle_timer(&mut self, segment: &SegmentId, generation: u64) -> Vec<Effect> {
        let mut effects = Vec::new();
        let Some(rt) = self.rt.get(segment) else { return effects };
        if rt.timer_generation != generation || !rt.parked {
            return effects;
        }
        let info = self.infos[segment].clone();
        if !self.dep_satisfied(&info) {
            return effects; // Splitting may not overtake the dependency.
        }
        let next_new = info.next_new.expect("parked segment installs here");
        let avail = self.residual_of(next_new);
        let pending = (rt.gtm_received - rt.installed).max(0.0);

        if avail < SPLIT_QUANTUM {
            self.report_deadlock(segment, false, &mut effects);
            return effects;
        }
        if !self.config.split_enabled {
            self.report_deadlock(segment, true, &mut effects);
            return effects;
        }

        // Split amount: the available capacity, capped by the smallest
        // release that unblocks another operation waiting on the link this
        // move frees at this switch.
        let mut amount = avail.min(pending);
        if let Some(next_old) = info.next_old {
            let have = self.residual_of(next_old);
            let needed = self
                .infos
                .values()
                .filter(|o| o.segment != *segment && o.next_new == Some(next_old))
                .map(|o| (o.volume - self.rt[&o.segment].installed) - have)
                .filter(|d| *d > VOL_EPS)
                .fold(f64::INFINITY, f64::min);
            if needed.is_finite() && needed + VOL_EPS < amount {
                amount = needed.max(SPLIT_QUANTUM);
            }
        }
        if amount < SPLIT_QUANTUM && pending > amount + VOL_EPS {
            self.report_deadlock(segment, false, &mut effects);
            return effects;
        }
        // The escape via splitting still counts as a detected deadlock.
        if !self.rt[segment].deadlock_reported {
            self.rt.get_mut(segment).unwrap().deadlock_reported = true;
            effects.push(Effect::DeadlockReport { segment: segment.clone(), splittable: true });
        }
        effects.push(Effect::Record {
            action: TraceAction::Split,
            segment: Some(segment.clone()),
            link: Some((self.switch, next_new)),
            volume: Some(amount),
        });
        self.move_volume(segment, amount, &mut effects);
        let rt = self.rt.get_mut(segment).unwrap();
        if rt.gtm_received > rt.installed + VOL_EPS {
            rt.parked = true;
            rt.timer_generation += 1;
            effects.push(Effect::ArmTimer {
                segment: segment.clone(),
                generation: rt.timer_generation,
            });
        }
        self.execute_ready(true, &mut effects);
        effects
    }

    fn report_deadlock(&mut self, segment: &SegmentId, splittable: bool, effects: &mut Vec<Effect>) {
        let rt = self.rt.get_mut(segment).unwrap();
        if rt.deadlock_reported {
            return;
        }
        rt.deadlock_reported = true;
        let link = self.infos[segment].next_new.map(|n| (self.switch, n));
        effects.push(Effect::Record {
            action: TraceAction::DeadlockDetected,
            segment: Some(segment.clone()),
            link,
            volume: None,
        });
        effects.push(Effect::DeadlockReport { segment: segment.clone(), splittable });
    }

    /// Repeatedly executes the highest-priority enabled pending segment until
    /// no further one fits. `residual_changed` re-arms the deadlock timers of
    /// segments that stay parked.
    pub fn try_execute_pending(&mut self) -> Vec<Effect> {
        let mut effects = Vec::new();
        self.execute_ready(true, &mut effects);
        effects
    }

    /// An InLoop segment's first switch terminates its dependency's old
    /// subpath; it may divert traffic only once that Removing wave has fully
    /// arrived, otherwise the detour can close a transient loop over the
    /// dependency's not-yet-removed entries.
    fn dep_satisfied(&self, info: &SegmentInfo) -> bool {
        if !info.is_first_on_new {
            return true;
        }
        let Some(dep) = &info.inloop_dep else { return true };
        match (self.infos.get(dep), self.rt.get(dep)) {
            (Some(di), Some(drt)) => drt.removing_received + VOL_EPS >= di.volume,
            _ => false,
        }
    }

    fn execute_ready(&mut self, residual_changed: bool, effects: &mut Vec<Effect>) {
        loop {
            let mut candidates: Vec<(Priority, SegmentId)> = self
                .rt
                .iter()
                .filter(|(id, rt)| {
                    rt.gtm_received - rt.installed > VOL_EPS
                        && self.infos[*id].next_new.is_some()
                        && self.dep_satisfied(&self.infos[*id])
                })
                .map(|(id, _)| (self.infos[id].priority, id.clone()))
                .collect();
            // Highest priority first, then ascending segment id.
            candidates.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
            let mut moved = false;
            for (_, id) in candidates {
                let rt = &self.rt[&id];
                let attempt = rt.gtm_received - rt.installed;
                if self.admissible(&id, attempt) {
                    self.move_volume(&id, attempt, effects);
                    moved = true;
                    break;
                }
            }
            if !moved {
                break;
            }
        }
        // Park what remains capacity-blocked; arm or reset timers. Segments
        // still waiting for their dependency's Removing do not time out
        // here: their dependency's own progress is what stalls or reports.
        let blocked: Vec<SegmentId> = self
            .rt
            .iter()
            .filter(|(id, rt)| {
                rt.gtm_received - rt.installed > VOL_EPS
                    && self.infos[*id].next_new.is_some()
                    && self.dep_satisfied(&self.infos[*id])
            })
            .map(|(id, _)| id.clone())
            .collect();
        for id in blocked {
            let rt = self.rt.get_mut(&id).unwrap();
            if !rt.parked || residual_changed {
                rt.parked = true;
                rt.timer_generation += 1;
                effects.push(Effect::ArmTimer { segment: id, generation: rt.timer_generation });
            }
        }
    }

    /// Capacity check plus the reservation rule: a segment may take the link
    /// only if the remaining residual still covers every pending
    /// higher-priority segment on the same link. A segment whose next hop
    /// does not change consumes nothing and always passes.
    fn admissible(&self, segment: &SegmentId, attempt: f64) -> bool {
        let info = &self.infos[segment];
        let link = info.next_new.expect("admissible only for installers");
        if info.next_old == Some(link) {
            return true;
        }
        let avail = self.residual_of(link);
        if attempt > avail + VOL_EPS {
            return false;
        }
        let higher: f64 = self
            .infos
            .values()
            .filter(|o| {
                o.segment != *segment
                    && o.next_new == Some(link)
                    && o.next_old != Some(link)
                    && o.priority > info.priority
            })
            .map(|o| (o.volume - self.rt[&o.segment].installed).max(0.0))
            .sum();
        higher <= VOL_EPS || avail - attempt >= higher - VOL_EPS
    }

    /// Moves `amount` of a segment onto the new path at this switch:
    /// reserves the new outgoing link, replaces the forwarding entry, and
    /// propagates the protocol. Only the segment's first switch releases its
    /// old outgoing link here; elsewhere the reservation waits for the
    /// `Removing` wave. Trace records carry resulting entry weights.
    fn move_volume(&mut self, segment: &SegmentId, amount: f64, effects: &mut Vec<Effect>) {
        let info = self.infos[segment].clone();
        let next_new = info.next_new.expect("move installs an entry");
        let unchanged_hop = info.next_old == Some(next_new);
        if !unchanged_hop {
            debug_assert!(amount <= self.residual_of(next_new) + VOL_EPS);
            self.consume(next_new, amount);
        }
        let rt = self.rt.get_mut(segment).unwrap();
        rt.installed = (rt.installed + amount).min(info.volume);
        let installed = rt.installed;
        let fully = installed + VOL_EPS >= info.volume;
        if fully {
            rt.parked = false;
            rt.timer_generation += 1;
        }
        if !unchanged_hop {
            effects.push(Effect::Record {
                action: TraceAction::InstallRule,
                segment: Some(segment.clone()),
                link: Some((self.switch, next_new)),
                volume: Some(installed),
            });
            if let Some(next_old) = info.next_old {
                // The replaced entry forwards the moved share to the new hop.
                effects.push(Effect::Record {
                    action: TraceAction::RemoveRule,
                    segment: Some(segment.clone()),
                    link: Some((self.switch, next_old)),
                    volume: Some((info.volume - installed).max(0.0)),
                });
                if info.is_first_on_new {
                    self.release_residual(segment, next_old, installed);
                }
            }
        }

        if info.is_first_on_new {
            match info.next_old {
                Some(next_old) => effects.push(Effect::Send {
                    to: next_old,
                    body: MsgBody::Removing { segment: segment.clone(), volume: amount },
                }),
                None => {
                    // Pure add: nothing to remove, complete on full install.
                    if fully && !self.rt[segment].acked {
                        self.rt.get_mut(segment).unwrap().acked = true;
                        self.record_complete(segment, effects);
                    }
                }
            }
        } else {
            effects.push(Effect::Send {
                to: info.prev_new.expect("non-first switch has a predecessor"),
                body: MsgBody::GoodToMove { segment: segment.clone(), volume: amount },
            });
        }

        if fully {
            // Release any Removing volume held for this install.
            self.process_removal(segment, effects);
            if !info.dep_triggers.is_empty() && !self.rt[segment].dep_fired {
                self.rt.get_mut(segment).unwrap().dep_fired = true;
                for dep in &info.dep_triggers {
                    let target = self.infos[dep].clone();
                    effects.push(Effect::Send {
                        to: target.prev_new.expect("InLoop chain starts above its last switch"),
                        body: MsgBody::GoodToMove {
                            segment: dep.clone(),
                            volume: target.volume,
                        },
                    });
                }
            }
        }
    }

    /// Applies received `Removing` volume: releases the old outgoing link's
    /// reservation and forwards along the old subpath. A switch that still
    /// has to install this segment's new rule holds the message until the
    /// install happens.
    fn process_removal(&mut self, segment: &SegmentId, effects: &mut Vec<Effect>) {
        let info = self.infos[segment].clone();
        let rt = &self.rt[segment];
        if info.next_new.is_some() && rt.installed + VOL_EPS < info.volume {
            return; // Hold until the new rule is installed here.
        }
        let received = rt.removing_received;
        if received <= rt.removing_done + VOL_EPS {
            return;
        }
        if let Some(next_old) = info.next_old {
            if info.next_new != Some(next_old) {
                self.release_residual(segment, next_old, received);
                if info.next_new.is_none() {
                    // Entry owned purely by the old path: update its weight.
                    effects.push(Effect::Record {
                        action: TraceAction::RemoveRule,
                        segment: Some(segment.clone()),
                        link: Some((self.switch, next_old)),
                        volume: Some((info.volume - received).max(0.0)),
                    });
                }
            }
        }
        let rt = self.rt.get_mut(segment).unwrap();
        let forward = received - rt.removing_done;
        if forward > VOL_EPS {
            rt.removing_done = received;
            match info.next_old {
                Some(next_old) => effects.push(Effect::Send {
                    to: next_old,
                    body: MsgBody::Removing { segment: segment.clone(), volume: forward },
                }),
                None => {
                    // End of the old subpath: the segment is done once the
                    // full volume has been removed.
                    if received + VOL_EPS >= info.volume && !rt.acked {
                        rt.acked = true;
                        self.record_complete(segment, effects);
                    }
                }
            }
        }
    }

    /// Raises the released reservation of a segment's old outgoing link to
    /// `target`. Flip-time and Removing-time releases overlap; the cumulative
    /// maximum never double-frees.
    fn release_residual(&mut self, segment: &SegmentId, next_old: SwitchId, target: f64) {
        let target = target.min(self.infos[segment].volume);
        let delta = {
            let rt = self.rt.get_mut(segment).unwrap();
            if target <= rt.released + VOL_EPS {
                return;
            }
            let delta = target - rt.released;
            rt.released = target;
            delta
        };
        let cap = self.capacity.get(&next_old).copied().unwrap_or(f64::INFINITY);
        let r = self.residual.entry(next_old).or_insert(0.0);
        *r = (*r + delta).min(cap);
    }

    fn record_complete(&self, segment: &SegmentId, effects: &mut Vec<Effect>) {
        effects.push(Effect::Record {
            action: TraceAction::Complete,
            segment: Some(segment.clone()),
            link: None,
            volume: None,
        });
        effects.push(Effect::Ack { segment: segment.clone() });
    }

    fn consume(&mut self, neighbor: SwitchId, amount: f64) {
        let r = self.residual.entry(neighbor).or_insert(0.0);
        *r -= amount;
        debug_assert!(*r > -1e-6, "residual of {}->{} went negative", self.switch, neighbor);
        if *r < 0.0 {
            *r = 0.0;
        }
    }

    /// Snapshot for failure recovery: what this switch has installed and
    /// removed, and how much of each segment sits on the new path.
    pub fn query_state(&self) -> AgentSnapshot {
        AgentSnapshot {
            switch: self.switch,
            installed_new: self.installed_new(),
            removed_old: self.removed_old(),
            moved_volume: self
                .rt
                .iter()
                .filter(|(_, rt)| rt.installed > VOL_EPS)
                .map(|(id, rt)| (id.clone(), rt.installed))
                .collect(),
        }
    }
}

/// Per-switch state returned by the controller's halt-and-query.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSnapshot {
    pub switch: SwitchId,
    pub installed_new: Vec<SegmentId>,
    pub removed_old: Vec<SegmentId>,
    pub moved_volume: BTreeMap<SegmentId, f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FlowId;

    fn seg_id(flow: &str, idx: u32) -> SegmentId {
        SegmentId::new(FlowId::new(flow), idx)
    }

    fn info(
        flow: &str,
        volume: f64,
        prio: Priority,
        new_sub: &[u32],
        old_sub: &[u32],
        at: u32,
    ) -> SegmentInfo {
        let here = SwitchId(at);
        let new: Vec<SwitchId> = new_sub.iter().map(|i| SwitchId(*i)).collect();
        let old: Vec<SwitchId> = old_sub.iter().map(|i| SwitchId(*i)).collect();
        let pn = new.iter().position(|s| *s == here);
        let po = old.iter().position(|s| *s == here);
        SegmentInfo {
            segment: seg_id(flow, 0),
            priority: prio,
            volume,
            prev_new: pn.and_then(|i| i.checked_sub(1)).map(|i| new[i]),
            next_new: pn.and_then(|i| new.get(i + 1)).copied(),
            prev_old: po.and_then(|i| i.checked_sub(1)).map(|i| old[i]),
            next_old: po.and_then(|i| old.get(i + 1)).copied(),
            on_new: pn.is_some(),
            on_old: po.is_some(),
            is_first_on_new: pn == Some(0),
            is_last_on_new: pn.map_or(false, |i| i + 1 == new.len()),
            is_first_on_old: po == Some(0),
            is_last_on_old: po.map_or(false, |i| i + 1 == old.len()),
            is_first_of_flow_old: po == Some(0),
            is_last_of_flow_old: po.map_or(false, |i| i + 1 == old.len()),
            is_first_of_flow_new: pn == Some(0),
            is_last_of_flow_new: pn.map_or(false, |i| i + 1 == new.len()),
            inloop_dep: None,
            dep_triggers: Vec::new(),
        }
    }

    fn agent(at: u32, residuals: &[(u32, f64)]) -> Agent {
        let caps: BTreeMap<SwitchId, f64> =
            residuals.iter().map(|(n, _)| (SwitchId(*n), 10.0)).collect();
        let res: BTreeMap<SwitchId, f64> =
            residuals.iter().map(|(n, r)| (SwitchId(*n), *r)).collect();
        Agent::new(SwitchId(at), caps, res, AgentConfig::default())
    }

    fn sends(effects: &[Effect]) -> Vec<&MsgBody> {
        effects
            .iter()
            .filter_map(|e| match e {
                Effect::Send { body, .. } => Some(body),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn install_update_triggers_gtm_at_last_switch() {
        // s3 is the last switch of F_B's segment (s2 s6 s3) -> (s2 s3).
        let mut a = agent(3, &[(4, 5.0), (7, 5.0)]);
        let effects =
            a.handle_install_update(vec![info("B", 5.0, Priority::High, &[2, 3], &[2, 6, 3], 3)]);
        let msgs = sends(&effects);
        assert_eq!(msgs.len(), 1);
        match msgs[0] {
            MsgBody::GoodToMove { segment, volume } => {
                assert_eq!(segment, &seg_id("B", 0));
                assert_eq!(*volume, 5.0);
            }
            other => panic!("expected GoodToMove, got {other:?}"),
        }
        // Duplicate InstallUpdate is a no-op.
        assert!(a
            .handle_install_update(vec![info("B", 5.0, Priority::High, &[2, 3], &[2, 6, 3], 3)])
            .is_empty());
    }

    #[test]
    fn install_update_without_last_flags_sends_nothing() {
        let mut a = agent(6, &[(3, 0.0)]);
        let effects = a.handle_install_update(vec![info(
            "R",
            5.0,
            Priority::High,
            &[2, 6, 3],
            &[2, 3],
            6,
        )]);
        assert!(sends(&effects).is_empty());
        let effects = a.handle_install_update(vec![]);
        assert!(effects.is_empty());
    }

    #[test]
    fn gtm_executes_when_capacity_suffices() {
        // s6 with 10 units free moves F_R and notifies its predecessor s2.
        let mut a = agent(6, &[(3, 10.0)]);
        a.handle_install_update(vec![info("R", 5.0, Priority::High, &[2, 6, 3], &[2, 3], 6)]);
        let effects = a.handle_good_to_move(&seg_id("R", 0), 5.0).unwrap();
        assert!(effects.iter().any(|e| matches!(
            e,
            Effect::Record { action: TraceAction::InstallRule, .. }
        )));
        match sends(&effects)[0] {
            MsgBody::GoodToMove { volume, .. } => assert_eq!(*volume, 5.0),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(a.residual_of(SwitchId(3)), 5.0);
    }

    #[test]
    fn gtm_parks_without_capacity() {
        let mut a = agent(6, &[(3, 2.0)]);
        a.handle_install_update(vec![info("R", 5.0, Priority::High, &[2, 6, 3], &[2, 3], 6)]);
        let effects = a.handle_good_to_move(&seg_id("R", 0), 5.0).unwrap();
        assert!(sends(&effects).is_empty());
        assert!(effects
            .iter()
            .any(|e| matches!(e, Effect::ArmTimer { .. })));
        assert_eq!(a.pending_gtm(), vec![seg_id("R", 0)]);
    }

    #[test]
    fn reservation_blocks_lower_priority() {
        // Fig. 4 at s2: residual 6 on l2,6; pi_G (3, Medium) must leave room
        // for pi_R (4, High): 6 - 3 < 4, so pi_G parks until pi_R executes.
        let mut a = agent(2, &[(6, 6.0), (3, 0.0)]);
        a.handle_install_update(vec![
            info("G", 3.0, Priority::Medium, &[2, 6, 3], &[2, 3], 2),
            info("R", 4.0, Priority::High, &[2, 6, 3], &[2, 3], 2),
        ]);
        let effects = a.handle_good_to_move(&seg_id("G", 0), 3.0).unwrap();
        assert!(sends(&effects).is_empty(), "pi_G must park");
        let effects = a.handle_good_to_move(&seg_id("R", 0), 4.0).unwrap();
        // pi_R executes; it is first on its new subpath, so Removing goes out.
        assert!(sends(&effects)
            .iter()
            .any(|b| matches!(b, MsgBody::Removing { .. })));
        // pi_G still parked: 6 - 4 = 2 < 3.
        assert!(a.pending_gtm().contains(&seg_id("G", 0)));
    }

    #[test]
    fn removing_releases_and_unblocks_in_priority_order() {
        let mut a = agent(6, &[(3, 0.0)]);
        a.handle_install_update(vec![
            info("R", 5.0, Priority::High, &[2, 6, 3], &[2, 3], 6),
            info("B", 5.0, Priority::High, &[1, 2, 3], &[1, 2, 6, 3], 6),
        ]);
        let parked = a.handle_good_to_move(&seg_id("R", 0), 5.0).unwrap();
        assert!(sends(&parked).is_empty());
        // Removing for F_B frees l6,3 and unblocks F_R.
        let effects = a.handle_removing(&seg_id("B", 0), 5.0).unwrap();
        assert_eq!(a.residual_of(SwitchId(3)), 5.0 - 5.0);
        let bodies = sends(&effects);
        assert!(bodies.iter().any(|b| matches!(b, MsgBody::Removing { .. })), "forwarded");
        assert!(bodies.iter().any(|b| matches!(b, MsgBody::GoodToMove { .. })), "unblocked");
    }

    #[test]
    fn removing_held_until_local_install() {
        // A common switch that has not yet installed the new rule holds the
        // Removing message.
        let mut a = agent(5, &[(6, 10.0), (7, 10.0)]);
        a.handle_install_update(vec![info(
            "F",
            4.0,
            Priority::Low,
            &[4, 5, 6, 8],
            &[4, 5, 7, 8],
            5,
        )]);
        let effects = a.handle_removing(&seg_id("F", 0), 4.0).unwrap();
        assert!(sends(&effects).is_empty(), "held, zero messages");
        assert_eq!(a.held_removing(), vec![seg_id("F", 0)]);
        // The install releases the held message.
        let effects = a.handle_good_to_move(&seg_id("F", 0), 4.0).unwrap();
        assert!(sends(&effects)
            .iter()
            .any(|b| matches!(b, MsgBody::Removing { .. })));
        assert!(a.held_removing().is_empty());
    }

    #[test]
    fn removing_at_end_of_old_subpath_completes() {
        let mut a = agent(3, &[(4, 5.0)]);
        a.handle_install_update(vec![info("B", 5.0, Priority::High, &[2, 3], &[2, 6, 3], 3)]);
        // s3 terminates both subpaths; the arriving Removing finishes the segment.
        let effects = a.handle_removing(&seg_id("B", 0), 5.0).unwrap();
        assert!(effects.iter().any(|e| matches!(e, Effect::Ack { .. })));
        assert!(effects.iter().any(|e| matches!(
            e,
            Effect::Record { action: TraceAction::Complete, .. }
        )));
        assert!(sends(&effects).is_empty());
        // Duplicate removal volume is ignored.
        let effects = a.handle_removing(&seg_id("B", 0), 5.0).unwrap();
        assert!(sends(&effects).is_empty());
    }

    #[test]
    fn unknown_segment_is_a_protocol_error() {
        let mut a = agent(3, &[(4, 5.0)]);
        a.handle_install_update(vec![]);
        assert!(a.handle_good_to_move(&seg_id("X", 0), 1.0).is_err());
        assert!(a.handle_removing(&seg_id("X", 0), 1.0).is_err());
    }

    #[test]
    fn timer_splits_by_exactly_the_enabling_amount() {
        // Fig. 3 at s2: F_B (4 units) parked on l2,3 with residual 2; F_R
        // needs 4 on l2,6 with residual 2, so freeing 2 is enough. The split
        // moves exactly min(available, needed) = 2.
        let mut a = agent(2, &[(3, 2.0), (6, 2.0)]);
        a.handle_install_update(vec![
            info("B", 4.0, Priority::High, &[2, 3], &[2, 6, 3], 2),
            info("R", 4.0, Priority::High, &[2, 6, 3], &[2, 3], 2),
        ]);
        let effects = a.handle_good_to_move(&seg_id("B", 0), 4.0).unwrap();
        let generation = effects
            .iter()
            .find_map(|e| match e {
                Effect::ArmTimer { generation, .. } => Some(*generation),
                _ => None,
            })
            .expect("parked with timer");
        let effects = a.handle_timer(&seg_id("B", 0), generation);
        let split = effects.iter().find_map(|e| match e {
            Effect::Record { action: TraceAction::Split, volume, .. } => *volume,
            _ => None,
        });
        assert_eq!(split, Some(2.0));
        // The split emits a Removing for the moved fraction and re-arms.
        assert!(sends(&effects)
            .iter()
            .any(|b| matches!(b, MsgBody::Removing { volume, .. } if *volume == 2.0)));
        assert!(effects.iter().any(|e| matches!(e, Effect::ArmTimer { .. })));
        assert_eq!(a.split_fraction(&seg_id("B", 0)), 2.0);
    }

    #[test]
    fn timer_with_zero_residual_reports_unsplittable() {
        let mut a = agent(2, &[(3, 0.0)]);
        a.handle_install_update(vec![info("B", 4.0, Priority::High, &[2, 3], &[2, 6, 3], 2)]);
        let effects = a.handle_good_to_move(&seg_id("B", 0), 4.0).unwrap();
        let generation = effects
            .iter()
            .find_map(|e| match e {
                Effect::ArmTimer { generation, .. } => Some(*generation),
                _ => None,
            })
            .unwrap();
        let effects = a.handle_timer(&seg_id("B", 0), generation);
        assert!(effects.iter().any(|e| matches!(
            e,
            Effect::DeadlockReport { splittable: false, .. }
        )));
        // Only reported once.
        let effects = a.handle_timer(&seg_id("B", 0), generation);
        assert!(effects.is_empty() || !effects.iter().any(|e| matches!(e, Effect::DeadlockReport { .. })));
    }

    #[test]
    fn degenerate_split_moves_everything() {
        let mut a = agent(2, &[(3, 0.0), (6, 10.0)]);
        a.handle_install_update(vec![info("B", 4.0, Priority::High, &[2, 3], &[2, 6, 3], 2)]);
        let effects = a.handle_good_to_move(&seg_id("B", 0), 4.0).unwrap();
        let generation = effects
            .iter()
            .find_map(|e| match e {
                Effect::ArmTimer { generation, .. } => Some(*generation),
                _ => None,
            })
            .unwrap();
        // Capacity shows up without a local Removing (timers are not reset),
        // so the fired timer finds residual >= pending and moves the whole
        // remaining volume in one degenerate split.
        a.residual.insert(SwitchId(3), 10.0);
        let effects = a.handle_timer(&seg_id("B", 0), generation);
        assert!(sends(&effects)
            .iter()
            .any(|b| matches!(b, MsgBody::Removing { volume, .. } if *volume == 4.0)));
        assert!(a.pending_gtm().is_empty());
    }

    #[test]
    fn try_execute_pending_noop_without_pendings() {
        let mut a = agent(2, &[(3, 5.0)]);
        a.handle_install_update(vec![]);
        assert!(a.try_execute_pending().is_empty());
    }
}
