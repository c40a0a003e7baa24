// Entry screen. Two ways in: fetch an escrowed credential with DN and
// password, or paste credential text directly. Either way the signing
// material stays in page memory; nothing is written to storage.

import { clearErrors, showError } from "./banner.js";
import { el } from "./dom.js";
import { UiSession } from "./session.js";

export interface Connector {
    fromEscrow(dn: string, password: string): Promise<UiSession>;
    fromText(credentialText: string): Promise<UiSession>;
}

export class LoginScreen {
    pending: Promise<void> = Promise.resolve();

    private readonly banners: HTMLElement;
    private readonly dnInput: HTMLInputElement;
    private readonly passwordInput: HTMLInputElement;
    private readonly pasteArea: HTMLTextAreaElement;

    constructor(
        host: HTMLElement,
        private readonly connector: Connector,
        private readonly onLogin: (session: UiSession) => void,
    ) {
        this.banners = el("div", { class: "banners" });
        this.dnInput = el("input", { class: "dn", type: "text", autocomplete: "username" });
        this.passwordInput = el("input", {
            class: "password",
            type: "password",
            autocomplete: "current-password",
        });
        this.pasteArea = el("textarea", {
            class: "paste",
            placeholder: "-----BEGIN GRID CERTIFICATE-----",
        });
        const retrieve = el("button", { class: "retrieve", type: "button" }, "retrieve");
        retrieve.onclick = () => {
            this.pending = this.attempt(() =>
                this.connector.fromEscrow(this.dnInput.value.trim(), this.passwordInput.value),
            );
        };
        const paste = el("button", { class: "use-pasted", type: "button" }, "use credential");
        paste.onclick = () => {
            this.pending = this.attempt(() => this.connector.fromText(this.pasteArea.value));
        };
        host.append(
            this.banners,
            el("h2", {}, "Sign in"),
            el(
                "div",
                { class: "escrow-form" },
                el("label", {}, "Distinguished name ", this.dnInput),
                el("label", {}, "Escrow password ", this.passwordInput),
                retrieve,
            ),
            el(
                "div",
                { class: "paste-form" },
                el("label", {}, "Or paste a credential ", this.pasteArea),
                paste,
            ),
            el(
                "p",
                { class: "note" },
                "The credential is held in memory for this page only; nothing is stored.",
            ),
        );
    }

    private async attempt(connect: () => Promise<UiSession>): Promise<void> {
        clearErrors(this.banners);
        try {
            const session = await connect();
            this.passwordInput.value = "";
            this.pasteArea.value = "";
            this.onLogin(session);
        } catch (err) {
            showError(this.banners, err);
        }
    }
}
