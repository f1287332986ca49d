import type { AlertRecord, DeviceEntry } from "./types.js";
import { attributeValue } from "./types.js";

export interface PendingCommand {
  deviceId: string;
  attribute: string;
  value: boolean | number | string;
  issuedAt: number;
}

/**
 * Client-side view of gateway state. Server responses are authoritative;
 * optimistic values only mask a device until the gateway confirms or the
 * command fails, so the UI never invents state it cannot revert.
 */
export class DashboardStore {
  devices = new Map<string, DeviceEntry>();
  alerts: AlertRecord[] = [];
  unseenAlerts = 0;
  connected = false;
  private pending = new Map<string, PendingCommand>();
  private seenSeqs = new Set<number>();
  private listeners = new Set<() => void>();

  subscribe(listener: () => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  setConnected(connected: boolean): void {
    if (this.connected !== connected) {
      this.connected = connected;
      this.notify();
    }
  }

  /** Replace device state from GET /devices; confirmed pendings drop away. */
  setDevices(entries: DeviceEntry[]): void {
    this.devices = new Map(entries.map((e) => [e.descriptor.id, e]));
    for (const [key, cmd] of this.pending) {
      const entry = this.devices.get(cmd.deviceId);
      if (!entry) continue;
      const raw = entry.state.attributes[cmd.attribute];
      if (raw !== undefined && attributeValue(raw) === cmd.value) {
        this.pending.delete(key);
      }
    }
    this.notify();
  }

  /** The value the UI should render: optimistic if a command is in flight. */
  displayValue(deviceId: string, attribute: string): boolean | number | string | undefined {
    const cmd = this.pending.get(`${deviceId}.${attribute}`);
    if (cmd) return cmd.value;
    const raw = this.devices.get(deviceId)?.state.attributes[attribute];
    return raw === undefined ? undefined : attributeValue(raw);
  }

  beginCommand(deviceId: string, attribute: string, value: boolean | number | string): void {
    this.pending.set(`${deviceId}.${attribute}`, {
      deviceId,
      attribute,
      value,
      issuedAt: Date.now(),
    });
    this.notify();
  }

  /** Command failed: drop the optimistic value so the server state shows. */
  revertCommand(deviceId: string, attribute: string): void {
    this.pending.delete(`${deviceId}.${attribute}`);
    this.notify();
  }

  get pendingCount(): number {
    return this.pending.size;
  }

  /** Insert alerts, deduplicating by seq and keeping (time, seq) descending. */
  addAlerts(records: AlertRecord[]): number {
    let added = 0;
    for (const record of records) {
      if (this.seenSeqs.has(record.seq)) continue;
      this.seenSeqs.add(record.seq);
      this.alerts.push(record);
      added += 1;
    }
    if (added > 0) {
      this.alerts.sort((a, b) => b.time - a.time || b.seq - a.seq);
      this.unseenAlerts += added;
      this.notify();
    }
    return added;
  }

  markAlertsSeen(): void {
    if (this.unseenAlerts !== 0) {
      this.unseenAlerts = 0;
      this.notify();
    }
  }

  get lastAlertSeq(): number {
    let max = -1;
    for (const seq of this.seenSeqs) if (seq > max) max = seq;
    return max;
  }
}
