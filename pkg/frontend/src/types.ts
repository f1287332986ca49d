export type AttributeJson =
  | boolean
  | number
  | string
  | { value: number; unit: string };

export interface Descriptor {
  id: string;
  display_name: string;
  kind: string;
  logical_address: string;
}

export interface DeviceState {
  kind: string;
  attributes: Record<string, AttributeJson>;
  last_update: number;
}

export interface DeviceEntry {
  descriptor: Descriptor;
  state: DeviceState;
}

export interface DeviceDetail extends DeviceEntry {
  /** [virtual time ns, numeric value] pairs, oldest first */
  series: [number, number][];
}

export interface AlertRecord {
  seq: number;
  time: number;
  severity: "info" | "warning" | "critical";
  category: "security" | "fire" | "water" | "system";
  source: string;
  message: string;
}

export interface SessionInfo {
  token: string;
  expires_at: number;
}

export interface SwipeResult {
  decision: "allow" | "deny";
  portal: string;
  portal_device: string;
}

export interface MetricsReport {
  uptime: { value: number | null; target: number; status: string };
  latency: {
    p50_ms: number | null;
    p95_ms: number | null;
    p99_ms: number | null;
    target_ms: number;
    status: string;
  };
  attack_detection: { incidents: number; detected: number; rate: number | null };
  alerts: Record<string, number>;
  dropped_count: number;
  time_to_first_registration_ms: number | null;
  all_targets_pass: boolean;
}

/** Attributes a client may write, per device kind. Sensors expose none. */
export const WRITABLE_ATTRIBUTES: Record<string, string[]> = {
  AirConditioner: ["on"],
  Furnace: ["on"],
  FireSprinkler: ["on"],
  Siren: ["on"],
  LawnSprinkler: ["on"],
  Light: ["on"],
  Webcam: ["recording"],
  Window: ["open"],
  Door: ["open"],
  GarageDoor: ["open"],
};

export function attributeValue(raw: AttributeJson): boolean | number | string {
  if (typeof raw === "object" && raw !== null) return raw.value;
  return raw;
}

export function attributeUnit(raw: AttributeJson): string | null {
  if (typeof raw === "object" && raw !== null) return raw.unit;
  return null;
}

export function isWritable(kind: string, attribute: string): boolean {
  return (WRITABLE_ATTRIBUTES[kind] ?? []).includes(attribute);
}
