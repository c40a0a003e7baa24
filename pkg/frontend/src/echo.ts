// Smallest possible round trip: send a string, show what came back.

import { clearErrors, showError } from "./banner.js";
import { el } from "./dom.js";
import { ConsoleSession } from "./session.js";

export class EchoScreen {
    pending: Promise<void> = Promise.resolve();

    private readonly banners: HTMLElement;
    private readonly input: HTMLInputElement;
    private readonly output: HTMLElement;

    constructor(host: HTMLElement, private readonly session: ConsoleSession) {
        this.banners = el("div", { class: "banners" });
        this.input = el("input", { class: "echo-in", type: "text", value: "Hello" });
        this.output = el("pre", { class: "echo-out" });
        const send = el("button", { type: "button" }, "send");
        send.onclick = () => {
            this.pending = this.send(this.input.value);
        };
        host.append(this.banners, el("div", { class: "row" }, this.input, send), this.output);
    }

    async send(text: string): Promise<void> {
        clearErrors(this.banners);
        try {
            const result = await this.session.call("echo.echo", [text]);
            this.output.textContent = JSON.stringify(result);
        } catch (err) {
            showError(this.banners, err);
        }
    }
}
