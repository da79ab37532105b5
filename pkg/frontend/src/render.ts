// Plain-DOM renderer for the metadata editor: one input per widget, add and
// remove controls bounded by cardinality, collapsible element groups, per
// widget error badges, and the suggestion dropdown.

import {
    FieldNode,
    FormModel,
    FormNode,
    GroupNode,
    canAddValue,
    canRemoveValue,
} from "./formModel.js";
import { DropdownItem } from "./suggest.js";

export interface RenderHandlers {
    onInput?: (field: FieldNode, index: number, text: string) => void;
    onFocus?: (field: FieldNode, index: number) => void;
    onAdd?: (field: FieldNode) => void;
    onRemove?: (field: FieldNode, index: number) => void;
    onSave?: () => void;
}

const INPUT_TYPE: Record<string, string> = {
    textInput: "text",
    numberInput: "number",
    dateInput: "date",
    termPicker: "text",
};

function renderInput(field: FieldNode, index: number, handlers: RenderHandlers): HTMLElement {
    const value = field.values[index];
    const text = value === undefined ? "" :
        value.kind === "term" ? value.label : value.text;
    let input: HTMLInputElement | HTMLTextAreaElement;
    if (field.widgetKind === "textArea") {
        input = document.createElement("textarea");
    } else {
        input = document.createElement("input");
        input.type = INPUT_TYPE[field.widgetKind];
    }
    input.value = text;
    input.dataset.path = field.path;
    input.dataset.index = String(index);
    input.dataset.widgetKind = field.widgetKind;
    input.addEventListener("input", () => handlers.onInput?.(field, index, input.value));
    input.addEventListener("focus", () => handlers.onFocus?.(field, index));
    return input;
}

function renderField(field: FieldNode, handlers: RenderHandlers): HTMLElement {
    const container = document.createElement("div");
    container.className = `widget widget-${field.widgetKind}`;
    container.dataset.path = field.path;

    const label = document.createElement("label");
    label.textContent = field.label + (field.cardinality.min >= 1 ? " *" : "");
    container.appendChild(label);

    const slots = Math.max(field.values.length, 1);
    for (let i = 0; i < slots; i++) {
        const row = document.createElement("div");
        row.className = "value-row";
        row.appendChild(renderInput(field, i, handlers));
        if (field.cardinality.max === null || field.cardinality.max > 1) {
            const remove = document.createElement("button");
            remove.type = "button";
            remove.className = "remove-value";
            remove.textContent = "−";
            remove.disabled = !canRemoveValue(field);
            remove.addEventListener("click", () => handlers.onRemove?.(field, i));
            row.appendChild(remove);
        }
        container.appendChild(row);
    }

    if (field.cardinality.max === null || field.cardinality.max > 1) {
        const add = document.createElement("button");
        add.type = "button";
        add.className = "add-value";
        add.textContent = "+";
        add.disabled = !canAddValue(field);
        add.addEventListener("click", () => handlers.onAdd?.(field));
        container.appendChild(add);
    }

    for (const message of field.errors) {
        const error = document.createElement("span");
        error.className = "field-error";
        error.textContent = message;
        container.appendChild(error);
    }
    return container;
}

function renderGroup(group: GroupNode, handlers: RenderHandlers): HTMLElement {
    const details = document.createElement("details");
    details.className = "element-group";
    details.dataset.path = group.path;
    details.open = !group.collapsed;
    const summary = document.createElement("summary");
    summary.textContent = group.label;
    details.appendChild(summary);
    for (const child of group.children) {
        details.appendChild(renderNode(child, handlers));
    }
    for (const message of group.errors) {
        const error = document.createElement("span");
        error.className = "field-error";
        error.textContent = message;
        details.appendChild(error);
    }
    return details;
}

function renderNode(node: FormNode, handlers: RenderHandlers): HTMLElement {
    return node.nodeType === "field"
        ? renderField(node, handlers)
        : renderGroup(node, handlers);
}

export function renderForm(model: FormModel, handlers: RenderHandlers = {}): HTMLElement {
    const form = document.createElement("form");
    form.className = "metadata-editor";
    form.addEventListener("submit", (event) => event.preventDefault());
    for (const node of model.nodes) {
        form.appendChild(renderNode(node, handlers));
    }
    for (const message of model.formErrors) {
        const banner = document.createElement("div");
        banner.className = "form-error";
        banner.textContent = message;
        form.appendChild(banner);
    }
    const save = document.createElement("button");
    save.type = "button";
    save.className = "save-instance";
    save.textContent = "Save";
    save.addEventListener("click", () => handlers.onSave?.());
    form.appendChild(save);
    return form;
}

export function renderDropdown(items: DropdownItem[],
                               onPick?: (item: DropdownItem) => void): HTMLElement {
    const list = document.createElement("ul");
    list.className = "suggestion-dropdown";
    for (const item of items) {
        const entry = document.createElement("li");
        entry.className = `suggestion suggestion-${item.origin}`;
        entry.textContent = item.display;
        entry.dataset.value = item.value;
        entry.addEventListener("click", () => onPick?.(item));
        list.appendChild(entry);
    }
    return list;
}
