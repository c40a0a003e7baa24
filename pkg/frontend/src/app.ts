// Page shell: reads the deployment config, shows the sign-in screen,
// then a tabbed console (files, groups, echo) bound to one session.

import { FileBrowser } from "./browse.js";
import { clear, el } from "./dom.js";
import { EchoScreen } from "./echo.js";
import { VoAdmin } from "./groups.js";
import { Connector, LoginScreen } from "./login.js";
import { UiSession } from "./session.js";

export function parseConfig(text: string): { [key: string]: string } {
    const out: { [key: string]: string } = {};
    for (const line of text.split("\n")) {
        const stripped = line.trim();
        if (!stripped || stripped.startsWith("#")) {
            continue;
        }
        const eq = stripped.indexOf("=");
        if (eq < 0) {
            continue;
        }
        out[stripped.slice(0, eq).trim()] = stripped.slice(eq + 1).trim();
    }
    return out;
}

function shell(host: HTMLElement, session: UiSession, onLogout: () => void): void {
    clear(host);
    const screens: { [name: string]: HTMLElement } = {
        files: el("section", { class: "screen-files" }),
        groups: el("section", { class: "screen-groups" }),
        echo: el("section", { class: "screen-echo" }),
    };
    const browser = new FileBrowser(screens.files, session);
    new VoAdmin(screens.groups, session);
    new EchoScreen(screens.echo, session);

    const nav = el("nav", {});
    const show = (name: string) => {
        for (const [key, screen] of Object.entries(screens)) {
            screen.style.display = key === name ? "" : "none";
        }
    };
    for (const name of Object.keys(screens)) {
        const tab = el("button", { type: "button", class: `tab tab-${name}` }, name);
        tab.onclick = () => show(name);
        nav.append(tab);
    }
    const logout = el("button", { type: "button", class: "logout" }, "sign out");
    logout.onclick = onLogout; // drops the session; nothing else holds it

    host.append(
        el("header", {}, el("span", { class: "operator" }, session.dn), logout),
        nav,
        screens.files,
        screens.groups,
        screens.echo,
    );
    show("files");
    browser.open("/");
}

export async function boot(host: HTMLElement): Promise<void> {
    let rpcPath = "/rpc";
    try {
        const resp = await fetch("console.conf");
        if (resp.ok) {
            rpcPath = parseConfig(await resp.text())["rpc_path"] ?? rpcPath;
        }
    } catch {
        // fall through to the default path
    }
    const base = location.origin;
    const connector: Connector = {
        fromEscrow: (dn, password) => UiSession.fromEscrow(base, rpcPath, dn, password),
        fromText: (text) => UiSession.fromCredentialText(base, rpcPath, text),
    };
    const showLogin = () => {
        clear(host);
        new LoginScreen(host, connector, (session) => shell(host, session, showLogin));
    };
    showLogin();
}
