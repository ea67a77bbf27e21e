import { fetchHistory, HistoryPage, reportUrl } from './api';

const PAGE_SIZE = 10;

// Paginated screening history. Filter changes cancel the in-flight fetch
// and replace it (stale responses never render).

export function initHistory(container: HTMLElement): void {
    container.innerHTML = `
    <div class="history-controls">
      <input type="search" id="history-filter" placeholder="Filter by patient name">
    </div>
    <div id="history-body"></div>
    <div class="pager" id="history-pager"></div>
  `;

    const filterInput = container.querySelector('#history-filter') as HTMLInputElement;
    const body = container.querySelector('#history-body') as HTMLDivElement;
    const pager = container.querySelector('#history-pager') as HTMLDivElement;

    let page = 1;
    let controller: AbortController | null = null;

    function renderTable(data: HistoryPage): void {
        if (data.total === 0) {
            body.innerHTML = '<p class="empty-state">No screenings recorded yet.</p>';
            pager.innerHTML = '';
            return;
        }
        const rows = data.items.map((item) => `
      <tr>
        <td>${new Date(item.timestamp).toLocaleString()}</td>
        <td>${escapeHtml(item.patient_name)}</td>
        <td class="${item.label === 'anemic' ? 'label-anemic' : 'label-healthy'}">
          ${item.label === 'anemic' ? 'Anemic' : 'Non-Anemic'}</td>
        <td>${(item.confidence * 100).toFixed(1)}%</td>
        <td><a href="${reportUrl(item.id)}" download>PDF</a></td>
      </tr>`).join('');
        body.innerHTML = `
      <table class="history-table">
        <thead><tr><th>Date</th><th>Patient</th><th>Result</th><th>Confidence</th><th>Report</th></tr></thead>
        <tbody>${rows}</tbody>
      </table>`;

        const pages = Math.max(1, Math.ceil(data.total / PAGE_SIZE));
        pager.innerHTML = '';
        const prev = document.createElement('button');
        prev.textContent = 'Previous';
        prev.disabled = page <= 1;
        prev.addEventListener('click', () => { page -= 1; void load(); });
        const status = document.createElement('span');
        status.className = 'pager-status';
        status.textContent = `Page ${page} of ${pages} (${data.total} screenings)`;
        const next = document.createElement('button');
        next.textContent = 'Next';
        next.disabled = page >= pages;
        next.addEventListener('click', () => { page += 1; void load(); });
        pager.append(prev, status, next);
    }

    async function load(): Promise<void> {
        controller?.abort();
        controller = new AbortController();
        try {
            const data = await fetchHistory(filterInput.value.trim(), page, PAGE_SIZE, controller.signal);
            renderTable(data);
        } catch (err) {
            if ((err as Error).name === 'AbortError') return;
            body.innerHTML = '<p class="error-banner" role="alert">Could not load history.</p>';
            pager.innerHTML = '';
        }
    }

    filterInput.addEventListener('input', () => {
        page = 1;
        void load();
    });

    void load();
}

function escapeHtml(text: string): string {
    const div = document.createElement('div');
    div.textContent = text;
    return div.innerHTML;
}
