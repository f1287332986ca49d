import { Dashboard } from "./ui.js";

const params = new URLSearchParams(window.location.search);
const gateway = params.get("gateway") ?? "http://127.0.0.1:8080";

const root = document.getElementById("app");
if (!root) throw new Error("missing #app element");

new Dashboard(root, gateway).start();
