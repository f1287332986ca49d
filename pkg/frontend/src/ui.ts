import { ApiError, GatewayClient } from "./api.js";
import { sparklinePath } from "./sparkline.js";
import { DashboardStore } from "./store.js";
import type { AlertRecord, DeviceEntry } from "./types.js";
import { attributeUnit, isWritable } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class Dashboard {
  private root: HTMLElement;
  private client: GatewayClient;
  private store = new DashboardStore();
  private stopStream: (() => void) | null = null;
  private pollTimer: number | null = null;
  private toastTimer: number | null = null;
  private series = new Map<string, [number, number][]>();

  constructor(root: HTMLElement, baseUrl: string) {
    this.root = root;
    this.client = new GatewayClient(baseUrl);
    this.store.subscribe(() => this.render());
  }

  start(): void {
    this.renderLogin();
  }

  // -- login ---------------------------------------------------------------

  private renderLogin(message = ""): void {
    this.root.innerHTML = "";
    const form = el("form", "login");
    form.append(el("h1", undefined, "hearth"));
    const user = el("input");
    user.placeholder = "username";
    user.autocomplete = "username";
    const pass = el("input");
    pass.type = "password";
    pass.placeholder = "password";
    pass.autocomplete = "current-password";
    const button = el("button", undefined, "Sign in");
    const error = el("p", "error", message);
    form.append(user, pass, button, error);
    form.addEventListener("submit", async (event) => {
      event.preventDefault();
      button.disabled = true;
      try {
        await this.client.login(user.value, pass.value);
        this.enterDashboard();
      } catch {
        // bad password and unknown user are deliberately indistinguishable
        error.textContent = "invalid credentials";
        button.disabled = false;
      }
    });
    this.root.append(form);
    user.focus();
  }

  private enterDashboard(): void {
    this.stopStream = this.client.streamAlerts(
      (alert) => this.store.addAlerts([alert]),
      (connected) => this.store.setConnected(connected),
    );
    const poll = async (): Promise<void> => {
      try {
        this.store.setDevices(await this.client.listDevices());
        await this.refreshSeries();
      } catch (e) {
        if (e instanceof ApiError && e.status === 401) {
          this.stop();
          this.renderLogin("session expired, sign in again");
          return;
        }
      }
      this.pollTimer = window.setTimeout(poll, 1000);
    };
    void poll();
  }

  private async refreshSeries(): Promise<void> {
    for (const entry of this.store.devices.values()) {
      if (entry.descriptor.kind !== "Thermostat") continue;
      const detail = await this.client.getDevice(entry.descriptor.id);
      this.series.set(entry.descriptor.id, detail.series);
    }
  }

  stop(): void {
    this.stopStream?.();
    this.stopStream = null;
    if (this.pollTimer !== null) window.clearTimeout(this.pollTimer);
    this.pollTimer = null;
    this.client.logout();
  }

  // -- dashboard -----------------------------------------------------------

  private render(): void {
    if (!this.client.authenticated) return;
    this.root.innerHTML = "";
    const page = el("div", "page");
    if (!this.store.connected) {
      page.append(el("div", "banner", "reconnecting to gateway..."));
    }
    const main = el("div", "columns");
    main.append(this.deviceGrid(), this.sidebar());
    page.append(main);
    this.root.append(page);
  }

  private deviceGrid(): HTMLElement {
    const grid = el("div", "grid");
    const entries = [...this.store.devices.values()].sort((a, b) =>
      a.descriptor.id.localeCompare(b.descriptor.id),
    );
    for (const entry of entries) grid.append(this.deviceCard(entry));
    return grid;
  }

  private deviceCard(entry: DeviceEntry): HTMLElement {
    const { descriptor, state } = entry;
    const card = el("div", "card");
    card.append(el("h3", undefined, descriptor.display_name));
    card.append(el("p", "kind", descriptor.kind));

    for (const [attribute, raw] of Object.entries(state.attributes)) {
      const row = el("div", "attr");
      const value = this.store.displayValue(descriptor.id, attribute);
      if (isWritable(descriptor.kind, attribute) && typeof value === "boolean") {
        const button = el("button", value ? "toggle on" : "toggle off");
        button.textContent = `${attribute}: ${value ? "on" : "off"}`;
        button.addEventListener("click", () =>
          this.toggle(descriptor.id, attribute, !value),
        );
        row.append(button);
      } else {
        const unit = attributeUnit(raw);
        const shown =
          typeof value === "number"
            ? `${value.toFixed(1)}${unit === "C" ? " C" : unit === "%" ? "%" : ""}`
            : String(value);
        row.append(el("span", "label", attribute));
        row.append(el("span", "value", shown));
      }
      card.append(row);
    }

    const series = this.series.get(descriptor.id);
    if (series && series.length > 1) {
      const svg = document.createElementNS("http://www.w3.org/2000/svg", "svg");
      svg.setAttribute("viewBox", "0 0 120 28");
      svg.classList.add("spark");
      const path = document.createElementNS("http://www.w3.org/2000/svg", "path");
      path.setAttribute("d", sparklinePath(series));
      path.setAttribute("fill", "none");
      svg.append(path);
      card.append(svg);
    }
    return card;
  }

  private async toggle(deviceId: string, attribute: string, value: boolean): Promise<void> {
    this.store.beginCommand(deviceId, attribute, value);
    try {
      await this.client.sendCommand(deviceId, attribute, value);
    } catch (e) {
      this.store.revertCommand(deviceId, attribute);
      this.toast(e instanceof ApiError ? e.message : "command failed");
    }
  }

  // -- sidebar: swipe, stimuli, alerts -------------------------------------

  private sidebar(): HTMLElement {
    const side = el("div", "side");
    side.append(this.swipePanel(), this.stimulusPanel(), this.alertFeed());
    return side;
  }

  private swipePanel(): HTMLElement {
    const panel = el("div", "panel");
    panel.append(el("h2", undefined, "RFID swipe"));
    const card = el("input");
    card.placeholder = "card number";
    const portal = el("select");
    for (const name of ["main_door", "garage"]) {
      const option = el("option", undefined, name);
      option.value = name;
      portal.append(option);
    }
    const button = el("button", undefined, "Swipe");
    const outcome = el("p", "outcome");
    button.addEventListener("click", async () => {
      try {
        const result = await this.client.swipe("rfid_reader", card.value, portal.value);
        outcome.textContent = `${result.decision} at ${result.portal}`;
        outcome.className = `outcome ${result.decision}`;
      } catch (e) {
        outcome.textContent = e instanceof ApiError ? e.message : "swipe failed";
        outcome.className = "outcome deny";
      }
    });
    panel.append(card, portal, button, outcome);
    return panel;
  }

  private stimulusPanel(): HTMLElement {
    const panel = el("div", "panel");
    panel.append(el("h2", undefined, "Scenario"));
    const actions: [string, string, Record<string, unknown>][] = [
      ["Start fire", "fire_start", {}],
      ["Stop fire", "fire_stop", {}],
      ["Motion zone 1", "motion", { zone: "zone1" }],
      ["Rain +20%", "rain", { delta_pct: 20 }],
      ["Gateway restart", "gateway_restart", {}],
    ];
    for (const [label, action, args] of actions) {
      const button = el("button", undefined, label);
      button.addEventListener("click", () =>
        this.client.stimulus(action, args).catch((e: unknown) => {
          this.toast(e instanceof ApiError ? e.message : "stimulus failed");
        }),
      );
      panel.append(button);
    }
    return panel;
  }

  private alertFeed(): HTMLElement {
    const panel = el("div", "panel alerts");
    const heading = el("h2", undefined, "Alerts");
    if (this.store.unseenAlerts > 0) {
      heading.append(el("span", "badge", String(this.store.unseenAlerts)));
    }
    panel.append(heading);
    const list = el("ul");
    for (const alert of this.store.alerts.slice(0, 50)) {
      list.append(this.alertItem(alert));
    }
    panel.append(list);
    panel.addEventListener("mouseenter", () => this.store.markAlertsSeen());
    return panel;
  }

  private alertItem(alert: AlertRecord): HTMLElement {
    const item = el("li", `alert ${alert.severity} ${alert.category}`);
    const seconds = Math.floor(alert.time / 1e9);
    item.append(el("span", "t", `t+${seconds}s`));
    item.append(el("span", "sev", alert.severity));
    item.append(el("span", "msg", `${alert.category}: ${alert.message}`));
    return item;
  }

  private toast(message: string): void {
    const existing = this.root.querySelector(".toast");
    existing?.remove();
    const node = el("div", "toast", message);
    this.root.append(node);
    if (this.toastTimer !== null) window.clearTimeout(this.toastTimer);
    this.toastTimer = window.setTimeout(() => node.remove(), 4000);
  }
}
