void f01(int n, double *a, double *b)
{
    int i;
#pragma omp parallel for
    for (i = 0; i < n; i++)
        a[i] = b[i] * 2.0;
    for (i = 1; i < n; i++)
        a[i] = a[i - 1] + b[i];
}
