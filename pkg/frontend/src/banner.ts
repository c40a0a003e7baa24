// Dismissible error banners. Server faults keep their code and message;
// anything else renders as a plain error line.

import { el } from "./dom.js";
import { RpcFault } from "./wire.js";

export function errorLabel(err: unknown): string {
    if (err instanceof RpcFault) {
        return `fault ${err.code}: ${err.faultMessage}`;
    }
    if (err instanceof Error) {
        return `error: ${err.message}`;
    }
    return `error: ${String(err)}`;
}

export function showError(host: HTMLElement, err: unknown): HTMLElement {
    const banner = el(
        "div",
        { class: "banner", role: "alert" },
        el("span", { class: "banner-text" }, errorLabel(err)),
    );
    const dismiss = el("button", { class: "banner-dismiss", type: "button" }, "dismiss");
    dismiss.onclick = () => banner.remove();
    banner.append(dismiss);
    host.append(banner);
    return banner;
}

export function clearErrors(host: HTMLElement): void {
    for (const banner of Array.from(host.querySelectorAll(".banner"))) {
        banner.remove();
    }
}
