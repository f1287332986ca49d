import type {
  AlertRecord,
  DeviceDetail,
  DeviceEntry,
  MetricsReport,
  SessionInfo,
  SwipeResult,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class GatewayClient {
  private token: string | null = null;

  constructor(
    public baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
  ) {}

  get authenticated(): boolean {
    return this.token !== null;
  }

  logout(): void {
    this.token = null;
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const headers: Record<string, string> = {};
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    if (body !== undefined) headers["Content-Type"] = "application/json";
    const response = await this.fetchImpl(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const parsed = (await response.json()) as { detail?: string };
        if (parsed.detail) detail = parsed.detail;
      } catch {
        /* non-JSON error body */
      }
      if (response.status === 401) this.token = null;
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  async login(username: string, password: string): Promise<SessionInfo> {
    const session = await this.request<SessionInfo>("POST", "/session", {
      username,
      password,
    });
    this.token = session.token;
    return session;
  }

  listDevices(): Promise<DeviceEntry[]> {
    return this.request<DeviceEntry[]>("GET", "/devices");
  }

  getDevice(id: string): Promise<DeviceDetail> {
    return this.request<DeviceDetail>("GET", `/devices/${id}`);
  }

  sendCommand(
    id: string,
    attribute: string,
    value: boolean | number | string,
    unit?: string,
  ): Promise<{ result: string }> {
    const body: Record<string, unknown> = { attribute, value };
    if (unit) body["unit"] = unit;
    return this.request<{ result: string }>(
      "POST",
      `/devices/${id}/command`,
      body,
    );
  }

  swipe(
    reader: string,
    cardNumber: string,
    portal: string,
  ): Promise<SwipeResult> {
    return this.request<SwipeResult>("POST", "/swipe", {
      reader,
      card_number: cardNumber,
      portal,
    });
  }

  alertsSince(seq: number): Promise<AlertRecord[]> {
    return this.request<AlertRecord[]>("GET", `/alerts?since=${seq}`);
  }

  metrics(): Promise<MetricsReport> {
    return this.request<MetricsReport>("GET", "/metrics");
  }

  stimulus(action: string, args: Record<string, unknown> = {}): Promise<void> {
    return this.request<void>("POST", "/stimulus", { action, ...args });
  }

  /**
   * Long-lived NDJSON alert stream. Reconnects resume from the last seq
   * actually delivered, so no alert is lost across connection drops.
   * Returns a stop function.
   */
  streamAlerts(
    onAlert: (alert: AlertRecord) => void,
    onStatus?: (connected: boolean) => void,
    retryMs = 1000,
  ): () => void {
    let stopped = false;
    let lastSeq = -1;

    const connect = async (): Promise<void> => {
      while (!stopped) {
        try {
          const response = await this.fetchImpl(
            `${this.baseUrl}/alerts?since=${lastSeq}&stream=true`,
            { headers: { Authorization: `Bearer ${this.token ?? ""}` } },
          );
          if (!response.ok || !response.body) throw new ApiError(response.status, "stream failed");
          onStatus?.(true);
          const reader = response.body.getReader();
          const decoder = new TextDecoder();
          let buffer = "";
          for (;;) {
            const { done, value } = await reader.read();
            if (done || stopped) break;
            buffer += decoder.decode(value, { stream: true });
            let newline;
            while ((newline = buffer.indexOf("\n")) >= 0) {
              const line = buffer.slice(0, newline).trim();
              buffer = buffer.slice(newline + 1);
              if (!line) continue;
              const alert = JSON.parse(line) as AlertRecord;
              lastSeq = alert.seq;
              onAlert(alert);
            }
          }
        } catch {
          /* fall through to retry */
        }
        onStatus?.(false);
        if (!stopped) await new Promise((r) => setTimeout(r, retryMs));
      }
    };

    void connect();
    return () => {
      stopped = true;
    };
  }
}
