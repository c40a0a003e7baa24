// Virtual-organization screen: create and delete groups, add members and
// admins, list both. Every mutation re-queries the lists on success, so
// what the page shows is what the server holds. One mutation in flight
// at a time; the whole form is disabled while one runs.

import { clearErrors, showError } from "./banner.js";
import { clear, el } from "./dom.js";
import { ConsoleSession } from "./session.js";

export class VoAdmin {
    group = "";
    pending: Promise<void> = Promise.resolve();

    private readonly banners: HTMLElement;
    private readonly fields: HTMLFieldSetElement;
    private readonly nameInput: HTMLInputElement;
    private readonly dnInput: HTMLInputElement;
    private readonly heading: HTMLElement;
    private readonly userList: HTMLElement;
    private readonly adminList: HTMLElement;

    constructor(host: HTMLElement, private readonly session: ConsoleSession) {
        this.banners = el("div", { class: "banners" });
        this.nameInput = el("input", {
            class: "group-name",
            type: "text",
            placeholder: "/org/subgroup",
        });
        this.dnInput = el("input", {
            class: "member-dn",
            type: "text",
            placeholder: "distinguished name",
        });
        const button = (label: string, cls: string, run: () => Promise<void>) => {
            const b = el("button", { type: "button", class: cls }, label);
            b.onclick = () => {
                this.pending = this.guarded(run);
            };
            return b;
        };
        this.heading = el("h3", { class: "current-group" }, "no group loaded");
        this.userList = el("ul", { class: "users" });
        this.adminList = el("ul", { class: "admins" });
        this.fields = el(
            "fieldset",
            {},
            el(
                "div",
                { class: "row" },
                this.nameInput,
                button("load", "load-group", () => this.load(this.nameInput.value.trim())),
                button("create", "create-group", () => this.create(this.nameInput.value.trim())),
                button("delete", "delete-group", () => this.remove(this.nameInput.value.trim())),
            ),
            el(
                "div",
                { class: "row" },
                this.dnInput,
                button("add member", "add-user", () =>
                    this.addUsers(this.group, [this.dnInput.value.trim()]),
                ),
                button("add admin", "add-admin", () =>
                    this.addAdmins(this.group, [this.dnInput.value.trim()]),
                ),
            ),
        );
        host.append(
            this.banners,
            this.fields,
            this.heading,
            el("h4", {}, "members"),
            this.userList,
            el("h4", {}, "admins"),
            this.adminList,
        );
    }

    users(): string[] {
        return Array.from(this.userList.children).map((li) => li.textContent ?? "");
    }

    admins(): string[] {
        return Array.from(this.adminList.children).map((li) => li.textContent ?? "");
    }

    private async guarded(run: () => Promise<void>): Promise<void> {
        clearErrors(this.banners);
        this.fields.disabled = true;
        try {
            await run();
        } catch (err) {
            showError(this.banners, err);
        } finally {
            this.fields.disabled = false;
        }
    }

    async load(name: string): Promise<void> {
        const users = await this.session.call("group.users", [name]);
        const admins = await this.session.call("group.admins", [name]);
        this.group = name;
        this.heading.textContent = name;
        clear(this.userList);
        clear(this.adminList);
        for (const dn of users) {
            this.userList.append(el("li", {}, String(dn)));
        }
        for (const dn of admins) {
            this.adminList.append(el("li", {}, String(dn)));
        }
    }

    async create(name: string): Promise<void> {
        await this.session.call("group.create", [name]);
        await this.load(name);
    }

    async remove(name: string): Promise<void> {
        await this.session.call("group.delete", [name]);
        if (this.group === name) {
            this.group = "";
            this.heading.textContent = "no group loaded";
            clear(this.userList);
            clear(this.adminList);
        }
    }

    async addUsers(name: string, dns: string[]): Promise<void> {
        await this.session.call("group.add_users", [name, dns]);
        await this.load(name);
    }

    async addAdmins(name: string, dns: string[]): Promise<void> {
        await this.session.call("group.add_admins", [name, dns]);
        await this.load(name);
    }
}
